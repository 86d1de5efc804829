//! Scanpath similarity: MultiMatch (shape, direction, length, position),
//! NSS of a scanpath against a ground-truth map, and fixation congruency.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::percentile;
use crate::model::{SaliencyMap, Scanpath};

/// Diagonal of the unit square, the largest possible displacement.
const DIAGONAL: f64 = SQRT_2;

pub const DEFAULT_CONGRUENCY_PERCENTILE: f64 = 80.0;

/// A saccade between two consecutive fixations, in normalised coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaccadeVector {
    pub start: (f64, f64),
    pub delta: (f64, f64),
}

impl SaccadeVector {
    pub fn end(&self) -> (f64, f64) {
        (self.start.0 + self.delta.0, self.start.1 + self.delta.1)
    }

    pub fn amplitude(&self) -> f64 {
        self.delta.0.hypot(self.delta.1)
    }

    /// Direction in radians, `atan2(dy, dx)`; a zero-length saccade has angle 0.
    pub fn angle(&self) -> f64 {
        self.delta.1.atan2(self.delta.0)
    }
}

/// Consecutive-fixation vectors of a scanpath.
///
/// Fails when the path has fewer than two points or every point coincides,
/// since such a path carries no saccade to compare.
pub fn to_saccades(path: &Scanpath) -> Result<Vec<SaccadeVector>> {
    let pts = path.points();
    if pts.len() < 2 {
        return Err(Error::Contract(format!("a scanpath with {} point(s) has no saccades", pts.len())));
    }
    if pts.iter().all(|p| p == &pts[0]) {
        return Err(Error::Contract("degenerate scanpath: every fixation is identical".into()));
    }
    Ok(pts
        .windows(2)
        .map(|w| SaccadeVector { start: w[0], delta: (w[1].0 - w[0].0, w[1].1 - w[0].1) })
        .collect())
}

fn vector_diff(u: &SaccadeVector, v: &SaccadeVector) -> f64 {
    (u.delta.0 - v.delta.0).hypot(u.delta.1 - v.delta.1)
}

/// Minimum-cost monotone alignment of two saccade sequences.
///
/// Node cost is the Euclidean distance between the two saccade vectors; the
/// path runs from `(0, 0)` to `(n−1, m−1)` with steps `(1,1)`, `(1,0)` and
/// `(0,1)`. Among equal-cost predecessors the diagonal wins, then `(1,0)`.
pub fn align(a: &[SaccadeVector], b: &[SaccadeVector]) -> Result<Vec<(usize, usize)>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Contract("cannot align an empty saccade sequence".into()));
    }
    let (n, m) = (a.len(), b.len());
    let mut dist = vec![f64::INFINITY; n * m];
    let mut from = vec![(0usize, 0usize); n * m];
    for i in 0..n {
        for j in 0..m {
            let cost = vector_diff(&a[i], &b[j]);
            if i == 0 && j == 0 {
                dist[0] = cost;
                continue;
            }
            let mut best: Option<((usize, usize), f64)> = None;
            for (pi, pj, ok) in [(i.wrapping_sub(1), j.wrapping_sub(1), i > 0 && j > 0), (i.wrapping_sub(1), j, i > 0), (i, j.wrapping_sub(1), j > 0)] {
                if !ok {
                    continue;
                }
                let d = dist[pi * m + pj];
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some(((pi, pj), d));
                }
            }
            let (pred, d) = best.expect("non-origin cell has a predecessor");
            dist[i * m + j] = d + cost;
            from[i * m + j] = pred;
        }
    }
    let mut path = vec![(n - 1, m - 1)];
    let mut cur = (n - 1, m - 1);
    while cur != (0, 0) {
        cur = from[cur.0 * m + cur.1];
        path.push(cur);
    }
    path.reverse();
    Ok(path)
}

/// The four MultiMatch similarities and their mean, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiMatchScores {
    pub shape: f64,
    pub direction: f64,
    pub length: f64,
    pub position: f64,
    pub mean: f64,
}

fn angular_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % (2.0 * PI);
    if d > PI {
        2.0 * PI - d
    } else {
        d
    }
}

/// MultiMatch comparison of a predicted and a ground-truth scanpath.
pub fn multimatch(pred: &Scanpath, gt: &Scanpath) -> Result<MultiMatchScores> {
    let u = to_saccades(pred)?;
    let v = to_saccades(gt)?;
    let pairs = align(&u, &v)?;
    let k = pairs.len() as f64;
    let mean_of = |f: &dyn Fn(&SaccadeVector, &SaccadeVector) -> f64| pairs.iter().map(|&(i, j)| f(&u[i], &v[j])).sum::<f64>() / k;
    let unit = |x: f64| x.clamp(0.0, 1.0);
    let shape = unit(1.0 - mean_of(&vector_diff) / (2.0 * DIAGONAL));
    let length = unit(1.0 - mean_of(&|a, b| (a.amplitude() - b.amplitude()).abs()) / DIAGONAL);
    let direction = unit(1.0 - mean_of(&|a, b| angular_difference(a.angle(), b.angle())) / PI);
    let position = unit(
        1.0 - mean_of(&|a, b| {
            let (ea, eb) = (a.end(), b.end());
            (ea.0 - eb.0).hypot(ea.1 - eb.1)
        }) / DIAGONAL,
    );
    Ok(MultiMatchScores { shape, direction, length, position, mean: (shape + direction + length + position) / 4.0 })
}

/// Mean standardised ground-truth saliency at the scanpath's pixel cells.
pub fn nss_scanpath(pred: &Scanpath, gt_map: &SaliencyMap) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::Contract("NSS of an empty scanpath".into()));
    }
    let v = gt_map.values();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    if super::saliency::is_constant(v) {
        return Err(Error::Contract("NSS against a constant map is undefined".into()));
    }
    let cells = pred.pixel_cells(gt_map.width(), gt_map.height());
    Ok(cells.iter().map(|&(r, c)| (gt_map.get(r, c) - mean) / std).sum::<f64>() / cells.len() as f64)
}

/// Fraction of fixations landing on pixels at or above the given percentile
/// of the ground-truth map.
pub fn congruency(pred: &Scanpath, gt_map: &SaliencyMap, pct: f64) -> Result<f64> {
    if !(0.0..=100.0).contains(&pct) {
        return Err(Error::Contract(format!("percentile {pct} outside [0, 100]")));
    }
    if pred.is_empty() {
        return Err(Error::Contract("congruency of an empty scanpath".into()));
    }
    let threshold = percentile(gt_map.values(), pct);
    let cells = pred.pixel_cells(gt_map.width(), gt_map.height());
    let hits = cells.iter().filter(|&&(r, c)| gt_map.get(r, c) >= threshold).count();
    Ok(hits as f64 / cells.len() as f64)
}

/// One row of a scanpath evaluation report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanpathScores {
    pub multimatch: MultiMatchScores,
    pub nss: f64,
    pub congruency: f64,
}

impl ScanpathScores {
    pub const COLUMNS: [&'static str; 7] = ["mm_shape", "mm_dir", "mm_len", "mm_pos", "mm_mean", "nss", "congruency"];

    pub fn values(&self) -> [f64; 7] {
        let m = &self.multimatch;
        [m.shape, m.direction, m.length, m.position, m.mean, self.nss, self.congruency]
    }

    pub fn evaluate(pred: &Scanpath, gt: &Scanpath, gt_map: &SaliencyMap, pct: f64) -> Result<Self> {
        Ok(ScanpathScores {
            multimatch: multimatch(pred, gt)?,
            nss: nss_scanpath(pred, gt_map)?,
            congruency: congruency(pred, gt_map, pct)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(p: &[(f64, f64)]) -> Scanpath {
        Scanpath::new(p.to_vec()).unwrap()
    }

    #[test]
    fn identical_paths_score_one() {
        let p = path(&[(0.1, 0.2), (0.5, 0.5), (0.9, 0.3), (0.4, 0.8)]);
        let s = multimatch(&p, &p).unwrap();
        assert_eq!((s.shape, s.direction, s.length, s.position, s.mean), (1.0, 1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn reversed_first_saccade_keeps_position() {
        let a = path(&[(0.2, 0.5), (0.5, 0.5)]);
        let b = path(&[(0.8, 0.5), (0.5, 0.5)]);
        let s = multimatch(&a, &b).unwrap();
        assert!(s.direction.abs() < 1e-12);
        assert_eq!(s.position, 1.0);
        assert_eq!(s.length, 1.0);
    }

    #[test]
    fn degenerate_paths_rejected() {
        let a = path(&[(0.5, 0.5), (0.5, 0.5), (0.5, 0.5)]);
        let b = path(&[(0.1, 0.1), (0.9, 0.9)]);
        assert!(matches!(multimatch(&a, &b), Err(Error::Contract(_))));
        assert!(matches!(to_saccades(&path(&[(0.1, 0.1)])), Err(Error::Contract(_))));
    }

    #[test]
    fn alignment_of_equal_sequences_is_diagonal() {
        let s = to_saccades(&path(&[(0.0, 0.0), (0.3, 0.1), (0.6, 0.7), (0.2, 0.9)])).unwrap();
        assert_eq!(align(&s, &s).unwrap(), vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn alignment_spans_both_sequences() {
        let a = to_saccades(&path(&[(0.0, 0.0), (0.3, 0.1), (0.6, 0.7)])).unwrap();
        let b = to_saccades(&path(&[(0.0, 0.0), (0.1, 0.0), (0.3, 0.1), (0.6, 0.7), (0.5, 0.5)])).unwrap();
        let p = align(&a, &b).unwrap();
        assert_eq!(p.first(), Some(&(0, 0)));
        assert_eq!(p.last(), Some(&(1, 3)));
        assert!(p.windows(2).all(|w| w[1].0 - w[0].0 <= 1 && w[1].1 - w[0].1 <= 1 && w[1] != w[0]));
    }

    #[test]
    fn angular_difference_wraps() {
        assert!((angular_difference(PI - 0.1, -PI + 0.1) - 0.2).abs() < 1e-12);
        assert_eq!(angular_difference(0.5, 0.5), 0.0);
    }

    #[test]
    fn congruency_and_nss() {
        let gt = SaliencyMap::from_fn(5, 5, |r, c| if r == 2 && c == 2 { 1.0 } else { 0.0 }).unwrap();
        let on = path(&[(0.5, 0.5), (0.5, 0.5)]);
        let off = path(&[(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(congruency(&on, &gt, 99.0).unwrap(), 1.0);
        assert_eq!(congruency(&off, &gt, 99.0).unwrap(), 0.0);
        assert!(nss_scanpath(&on, &gt).unwrap() > 4.0);
        assert!(nss_scanpath(&off, &gt).unwrap() < 0.0);
        assert!(congruency(&on, &gt, 120.0).is_err());
    }
}
