use driver_wm_core::evaluation::*;
use driver_wm_core::numerics::{Rng, Tensor};

struct Instance {
    pred: Tensor,
    target: Tensor,
    mask: Tensor,
    frame: (f64, f64),
}

fn instance(seed: u64) -> Instance {
    let mut rng = Rng::new(seed);
    let tf = 1 + rng.below(6);
    let k = 1 + rng.below(20);
    let frame = (rng.uniform_range(100.0, 2000.0).round(), rng.uniform_range(100.0, 2000.0).round());
    let target = Tensor::matrix(tf, 2 * k, (0..tf * 2 * k).map(|_| rng.uniform()).collect());
    let spread = rng.uniform_range(0.0, 0.2);
    let pred = target.map(|x| x);
    let pred = Tensor::matrix(tf, 2 * k, pred.data().iter().map(|x| x + spread * rng.normal()).collect());
    let mut mask = Tensor::matrix(tf, k, (0..tf * k).map(|_| if rng.bernoulli(0.7) { 1.0 } else { 0.0 }).collect());
    mask.data_mut()[0] = 1.0;
    Instance { pred, target, mask, frame }
}

fn errors(i: &Instance) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for h in 0..i.mask.rows() {
        for j in 0..i.mask.cols() {
            if i.mask.get2(h, j) > 0.0 {
                let dx = (i.pred.get2(h, 2 * j) - i.target.get2(h, 2 * j)) * i.frame.0;
                let dy = (i.pred.get2(h, 2 * j + 1) - i.target.get2(h, 2 * j + 1)) * i.frame.1;
                out.push((h, (dx * dx + dy * dy).sqrt()));
            }
        }
    }
    out
}

#[test]
fn mpjpe_matches_brute_force_exactly() {
    for seed in 0..50 {
        let i = instance(seed);
        let errs = errors(&i);
        let got = mpjpe(&i.pred, &i.target, &i.mask, i.frame).unwrap();
        let mut total = 0.0;
        for h in 0..i.mask.rows() {
            let row: Vec<f64> = errs.iter().filter(|e| e.0 == h).map(|e| e.1).collect();
            let mut s = 0.0;
            for e in &row {
                s += e;
            }
            total += s;
            if row.is_empty() {
                assert!(got.per_horizon[h].is_nan());
            } else {
                assert_eq!(got.per_horizon[h], s / row.len() as f64, "seed {}", seed);
            }
        }
        assert_eq!(got.mean, total / errs.len() as f64, "seed {}", seed);
    }
}

#[test]
fn pck_matches_brute_force_exactly() {
    for seed in 0..50 {
        let i = instance(seed);
        let errs = errors(&i);
        let diag = (i.frame.0 * i.frame.0 + i.frame.1 * i.frame.1).sqrt();
        let mut last = -1.0;
        for f in [0.05, 0.10] {
            let hits = errs.iter().filter(|e| e.1 <= f * diag).count();
            let expect = 100.0 * hits as f64 / errs.len() as f64;
            let got = pck(&i.pred, &i.target, &i.mask, i.frame, f).unwrap();
            assert_eq!(got, expect, "seed {}", seed);
            assert!(got >= last);
            last = got;
        }
    }
}

fn brute_f1(preds: &[usize], labels: &[usize], classes: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..classes {
        let mut tp = 0;
        let mut fp = 0;
        let mut fneg = 0;
        for (&p, &l) in preds.iter().zip(labels) {
            match (p == c, l == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                _ => {}
            }
        }
        if tp > 0 {
            let precision = tp as f64 / (tp + fp) as f64;
            let recall = tp as f64 / (tp + fneg) as f64;
            total += 2.0 * precision * recall / (precision + recall);
        }
    }
    100.0 * total / classes as f64
}

#[test]
fn macro_f1_matches_confusion_oracle() {
    for seed in 0..50 {
        let mut rng = Rng::new(1000 + seed);
        let classes = 2 + rng.below(6);
        let n = 1 + rng.below(40);
        let labels: Vec<usize> = (0..n).map(|_| rng.below(classes)).collect();
        let preds: Vec<usize> = labels
            .iter()
            .map(|&l| if rng.bernoulli(0.6) { l } else { rng.below(classes) })
            .collect();
        let got = macro_f1(&preds, &labels, classes).unwrap();
        assert!((got - brute_f1(&preds, &labels, classes)).abs() < 1e-12, "seed {}", seed);
        assert!((0.0..=100.0).contains(&got));
    }
}

#[test]
fn constant_predictor_on_balanced_classes() {
    let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
    let preds = vec![1; 30];
    let f1_one = 2.0 * (1.0 / 3.0) / (1.0 / 3.0 + 1.0);
    let got = macro_f1(&preds, &labels, 3).unwrap();
    assert!((got - 100.0 * f1_one / 3.0).abs() < 1e-12);
}

#[test]
fn hm_selection_matches_sort_oracle() {
    for seed in 0..50 {
        let mut rng = Rng::new(2000 + seed);
        let n = 1 + rng.below(30);
        let scores: Vec<(String, f64)> = (0..n)
            .map(|i| (format!("{:05}", (i * 7919) % 100_000), (rng.below(8) as f64) * 0.5))
            .collect();
        let fraction = rng.uniform();
        let got = hm_select(&scores, HmSelection::TopFraction(fraction)).unwrap();
        let take = ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
        let mut chosen: Vec<(String, f64)> = Vec::new();
        let mut pool = scores.clone();
        for _ in 0..take.min(n) {
            let mut best = 0;
            for j in 1..pool.len() {
                let (a, b) = (&pool[j], &pool[best]);
                if a.1 > b.1 || (a.1 == b.1 && a.0 < b.0) {
                    best = j;
                }
            }
            chosen.push(pool.remove(best));
        }
        let ids: Vec<String> = chosen.iter().map(|c| c.0.clone()).collect();
        assert_eq!(got.ids, ids, "seed {}", seed);
        if let Some(last) = chosen.last() {
            assert_eq!(got.threshold, last.1);
        }
        let count = rng.below(n + 3);
        assert_eq!(hm_select(&scores, HmSelection::Count(count)).unwrap().ids.len(), count.min(n));
    }
}

#[test]
fn motion_score_matches_loop() {
    for seed in 0..50 {
        let mut rng = Rng::new(3000 + seed);
        let tf = 2 + rng.below(5);
        let k = 1 + rng.below(10);
        let w = Tensor::matrix(tf, 2 * k, (0..tf * 2 * k).map(|_| rng.uniform()).collect());
        let frame = (1920.0, 1080.0);
        let mut total = 0.0;
        for t in 0..tf - 1 {
            for j in 0..k {
                let dx = (w.get2(t + 1, 2 * j) - w.get2(t, 2 * j)) * frame.0;
                let dy = (w.get2(t + 1, 2 * j + 1) - w.get2(t, 2 * j + 1)) * frame.1;
                total += (dx * dx + dy * dy).sqrt();
            }
        }
        assert_eq!(motion_score(&w, frame).unwrap(), total / ((tf - 1) * k) as f64);
    }
}

#[test]
fn hm_count_on_609_clips() {
    let scores: Vec<(String, f64)> = (0..609).map(|i| (format!("{:05}", i), i as f64)).collect();
    assert_eq!(hm_select(&scores, HmSelection::TopFraction(0.10)).unwrap().ids.len(), 61);
    assert_eq!(hm_select(&scores, HmSelection::Count(60)).unwrap().ids.len(), 60);
}

#[test]
fn diagonal_normalization_reference_rows() {
    let f = (1920.0, 1080.0);
    assert!((d_nmpjpe(52.89, f) - 2.40).abs() <= 0.005);
    assert!((d_nmpjpe(71.47, f) - 3.24).abs() <= 0.005);
}
