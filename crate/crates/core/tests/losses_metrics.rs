use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use salypath::losses::{
    kldiv, kldiv_var, mse_map, nss_term, saliency_loss, scanpath_loss, LossWeights, EPS,
};
use salypath::metrics::{
    align, auc_borji, auc_judd, cc, kld_metric, multimatch, nss, sim, to_saccades, FixationSet, SaccadeVector,
};
use salypath::{Graph, SaliencyMap, Scanpath, Tensor};

fn random_map(w: usize, h: usize, rng: &mut ChaCha8Rng) -> SaliencyMap {
    SaliencyMap::new(w, h, (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

fn random_path(n: usize, rng: &mut ChaCha8Rng) -> Scanpath {
    Scanpath::new((0..n).map(|_| (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0))).collect()).unwrap()
}

fn kl_oracle(p: &[f64], q: &[f64]) -> f64 {
    let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
    let z = 1.0 + p.len() as f64 * EPS;
    let mut total = 0.0;
    for (a, b) in p.iter().zip(q) {
        let (pn, qn) = ((a / sp + EPS) / z, (b / sq + EPS) / z);
        total += qn * (qn / pn).ln();
    }
    total
}

#[test]
fn kl_is_non_negative_over_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..1000 {
        let (w, h) = (rng.random_range(1..8), rng.random_range(1..8));
        let p = random_map(w, h, &mut rng);
        let q = random_map(w, h, &mut rng);
        let kl = kldiv(&p, &q).unwrap();
        assert!(kl >= -1e-12, "{kl}");
        assert!((kl - kl_oracle(p.values(), q.values())).abs() < 1e-9);
        assert_eq!(kld_metric(&p, &q).unwrap(), kl);
    }
}

#[test]
fn kl_of_identical_maps_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = random_map(6, 5, &mut rng);
    assert!(kldiv(&p, &p).unwrap().abs() < 1e-12);
}

#[test]
fn weighted_loss_is_sum_of_terms() {
    let pred = SaliencyMap::new(4, 4, (0..16).map(|i| 0.05 + 0.05 * i as f64).collect()).unwrap();
    let gt = SaliencyMap::new(4, 4, (0..16).map(|i| ((i * 7) % 16) as f64 / 15.0).collect()).unwrap();
    let fix = vec![(0, 0), (1, 2), (3, 3)];

    let mse: f64 = pred.values().iter().zip(gt.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 16.0;
    let mean = pred.values().iter().sum::<f64>() / 16.0;
    let std = (pred.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0).sqrt();
    let nss: f64 = fix.iter().map(|&(r, c)| (pred.get(r, c) - mean) / std).sum::<f64>() / 3.0;
    let kl = kl_oracle(pred.values(), gt.values());

    assert!((mse_map(&pred, &gt).unwrap() - mse).abs() < 1e-12);
    assert!((nss_term(&pred, &fix).unwrap().value - nss).abs() < 1e-12);
    let w = LossWeights { kl_w: 0.6, mse_w: 0.3, nss_w: 0.1 };
    let total = saliency_loss(&pred, &gt, &fix, &w).unwrap();
    assert!((total - (0.6 * kl + 0.3 * mse - 0.1 * nss)).abs() < 1e-12);
}

#[test]
fn scanpath_loss_matches_loop_and_is_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let a = random_path(8, &mut rng);
        let b = random_path(8, &mut rng);
        let mut acc = 0.0;
        for i in 0..8 {
            let (p, q) = (a.points()[i], b.points()[i]);
            acc += (p.0 - q.0) * (p.0 - q.0) + (p.1 - q.1) * (p.1 - q.1);
        }
        let l = scanpath_loss(&a, &b).unwrap();
        assert!((l - acc / 8.0).abs() < 1e-12);
        assert_eq!(l, scanpath_loss(&b, &a).unwrap());
    }
}

#[test]
fn gradient_descent_drives_kl_down() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let gt = random_map(8, 8, &mut rng).map(|v| v * v).unwrap();
    let mut logits = Tensor::zeros(vec![1, 1, 8, 8]);
    let mut first = None;
    let mut last = 0.0;
    for _ in 0..200 {
        let g = Graph::new();
        let x = g.param(logits.clone());
        let loss = kldiv_var(x.sigmoid(), &gt).unwrap();
        loss.backward().unwrap();
        last = loss.value().item().unwrap();
        first.get_or_insert(last);
        let grad = x.grad().unwrap();
        for (v, d) in logits.data_mut().iter_mut().zip(grad.data()) {
            *v -= 20.0 * d;
        }
    }
    let first = first.unwrap();
    assert!(last < 0.1 * first, "{first} -> {last}");
}

fn mann_whitney(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for p in pos {
        for n in neg {
            wins += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

#[test]
fn auc_borji_equals_mann_whitney_on_replayed_negatives() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..20 {
        let map = SaliencyMap::new(10, 7, (0..70).map(|_| (rng.random_range(0.0..1.0f64) * 8.0).floor() / 8.0).collect()).unwrap();
        let mut pts: Vec<(usize, usize)> = (0..12).map(|_| (rng.random_range(0..7), rng.random_range(0..10))).collect();
        pts.push(pts[0]);
        let fix = FixationSet::new(10, 7, pts.clone()).unwrap();
        let seed = 100 + trial;
        let splits = 5;

        let fixated: std::collections::HashSet<_> = pts.iter().copied().collect();
        let candidates: Vec<f64> = (0..7)
            .flat_map(|r| (0..10).map(move |c| (r, c)))
            .filter(|rc| !fixated.contains(rc))
            .map(|(r, c)| map.get(r, c))
            .collect();
        let pos: Vec<f64> = pts.iter().map(|&(r, c)| map.get(r, c)).collect();
        let mut replay = ChaCha8Rng::seed_from_u64(seed);
        let mut expected = 0.0;
        for _ in 0..splits {
            let neg: Vec<f64> = (0..pos.len()).map(|_| candidates[replay.random_range(0..candidates.len())]).collect();
            expected += mann_whitney(&pos, &neg);
        }
        expected /= splits as f64;
        let got = auc_borji(&map, &fix, splits, seed).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }
}

#[test]
fn auc_judd_perfect_and_inverted_predictions() {
    let fix = FixationSet::new(5, 5, vec![(1, 1), (3, 2)]).unwrap();
    let good = SaliencyMap::from_fn(5, 5, |r, c| if (r, c) == (1, 1) || (r, c) == (3, 2) { 1.0 } else { 0.1 }).unwrap();
    assert_eq!(auc_judd(&good, &fix).unwrap(), 1.0);
    let bad = good.map(|v| 1.1 - v).unwrap();
    // the only threshold is the fixated value, which every pixel reaches
    assert_eq!(auc_judd(&bad, &fix).unwrap(), 0.5);
}

fn path_cost(a: &[SaccadeVector], b: &[SaccadeVector], path: &[(usize, usize)]) -> f64 {
    path.iter()
        .map(|&(i, j)| (a[i].delta.0 - b[j].delta.0).hypot(a[i].delta.1 - b[j].delta.1))
        .sum()
}

fn brute_min(a: &[SaccadeVector], b: &[SaccadeVector], i: usize, j: usize) -> f64 {
    let here = (a[i].delta.0 - b[j].delta.0).hypot(a[i].delta.1 - b[j].delta.1);
    if i + 1 == a.len() && j + 1 == b.len() {
        return here;
    }
    let mut best = f64::INFINITY;
    if i + 1 < a.len() && j + 1 < b.len() {
        best = best.min(brute_min(a, b, i + 1, j + 1));
    }
    if i + 1 < a.len() {
        best = best.min(brute_min(a, b, i + 1, j));
    }
    if j + 1 < b.len() {
        best = best.min(brute_min(a, b, i, j + 1));
    }
    here + best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn saliency_metrics_stay_in_range(seed in any::<u64>(), w in 2usize..10, h in 2usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_map(w, h, &mut rng);
        let g = random_map(w, h, &mut rng);
        let fix = FixationSet::new(w, h, vec![(rng.random_range(0..h), rng.random_range(0..w))]).unwrap();
        let judd = auc_judd(&p, &fix).unwrap();
        let borji = auc_borji(&p, &fix, 10, seed).unwrap();
        prop_assert!((0.0..=1.0).contains(&judd) && (0.0..=1.0).contains(&borji));
        let c = cc(&p, &g).unwrap();
        prop_assert!((-1.0..=1.0).contains(&c));
        let s = sim(&p, &g).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&s));
        prop_assert!(kld_metric(&p, &g).unwrap() >= -1e-9);
        prop_assert!(nss(&p, &fix).unwrap().is_finite());
    }

    #[test]
    fn multimatch_scores_stay_in_unit_interval(seed in any::<u64>(), n in 2usize..10, m in 2usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = multimatch(&random_path(n, &mut rng), &random_path(m, &mut rng)).unwrap();
        for v in [s.shape, s.direction, s.length, s.position, s.mean] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn alignment_is_minimum_cost(seed in any::<u64>(), n in 3usize..7, m in 3usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = to_saccades(&random_path(n, &mut rng)).unwrap();
        let b = to_saccades(&random_path(m, &mut rng)).unwrap();
        let path = align(&a, &b).unwrap();
        prop_assert_eq!(path[0], (0, 0));
        prop_assert_eq!(*path.last().unwrap(), (a.len() - 1, b.len() - 1));
        for w in path.windows(2) {
            let step = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            prop_assert!(step == (1, 1) || step == (1, 0) || step == (0, 1));
        }
        prop_assert!((path_cost(&a, &b, &path) - brute_min(&a, &b, 0, 0)).abs() < 1e-9);
    }
}

#[test]
fn multimatch_separates_translation_from_shape() {
    let a = Scanpath::new(vec![(0.1, 0.1), (0.3, 0.2), (0.5, 0.5), (0.4, 0.7)]).unwrap();
    let same = multimatch(&a, &a).unwrap();
    assert_eq!([same.shape, same.direction, same.length, same.position, same.mean], [1.0; 5]);

    let shifted = Scanpath::new(a.points().iter().map(|&(x, y)| (x + 0.2, y + 0.1)).collect()).unwrap();
    let s = multimatch(&shifted, &a).unwrap();
    assert!((s.shape - 1.0).abs() < 1e-12 && (s.direction - 1.0).abs() < 1e-12 && (s.length - 1.0).abs() < 1e-12);
    let expected_pos = 1.0 - 0.2f64.hypot(0.1) / 2f64.sqrt();
    assert!((s.position - expected_pos).abs() < 1e-12, "{}", s.position);
}
