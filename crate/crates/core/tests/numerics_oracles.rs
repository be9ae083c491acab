use driver_wm_core::numerics::nn::{self, Activation, MlpSpec};
use driver_wm_core::numerics::{finite_diff_check, Graph, Objective, ParameterSet, Rng, Tensor};
use proptest::prelude::*;

fn random(rng: &mut Rng, r: usize, c: usize) -> Tensor {
    Tensor::matrix(r, c, (0..r * c).map(|_| rng.normal()).collect())
}

fn naive_matmul(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for p in 0..k {
                s += a.data()[i * k + p] * b.data()[p * m + j];
            }
            out[i * m + j] = s;
        }
    }
    out
}

fn naive_attention(q: &Tensor, k: &Tensor, v: &Tensor, heads: usize) -> Vec<f64> {
    let (nq, d) = (q.rows(), q.cols());
    let nk = k.rows();
    let dh = d / heads;
    let mut out = vec![0.0; nq * d];
    for h in 0..heads {
        for i in 0..nq {
            let scores: Vec<f64> = (0..nk)
                .map(|j| (0..dh).map(|c| q.get2(i, h * dh + c) * k.get2(j, h * dh + c)).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
            let z: f64 = w.iter().sum();
            for c in 0..dh {
                out[i * d + h * dh + c] = (0..nk).map(|j| w[j] / z * v.get2(j, h * dh + c)).sum();
            }
        }
    }
    out
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = Rng::new(11);
    for (n, k, m) in [(1, 1, 1), (3, 4, 5), (7, 2, 9), (16, 16, 3)] {
        let a = random(&mut rng, n, k);
        let b = random(&mut rng, k, m);
        let c = a.matmul(&b).unwrap();
        for (x, y) in c.data().iter().zip(naive_matmul(&a, &b)) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
}

#[test]
fn attention_matches_naive_softmax_loop() {
    let mut rng = Rng::new(12);
    for (nq, nk, d, heads) in [(1, 1, 4, 1), (3, 5, 8, 2), (4, 7, 12, 4), (2, 9, 16, 4)] {
        let q = random(&mut rng, nq, d);
        let k = random(&mut rng, nk, d);
        let v = random(&mut rng, nk, d);
        let out = nn::scaled_dot_attention(&q, &k, &v, heads).unwrap();
        for (x, y) in out.data().iter().zip(naive_attention(&q, &k, &v, heads)) {
            assert!((x - y).abs() < 1e-12, "{} vs {}", x, y);
        }
    }
}

#[test]
fn single_key_attention_returns_its_value() {
    let mut rng = Rng::new(13);
    let q = random(&mut rng, 3, 8);
    let k = random(&mut rng, 1, 8);
    let v = random(&mut rng, 1, 8);
    let out = nn::scaled_dot_attention(&q, &k, &v, 2).unwrap();
    for r in 0..3 {
        for (x, y) in out.row_slice(r).iter().zip(v.data()) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}

#[test]
fn attention_rejects_empty_keys() {
    let q = Tensor::zeros(&[2, 4]);
    let k = Tensor::zeros(&[0, 4]);
    assert_eq!(
        nn::scaled_dot_attention(&q, &k, &k, 1),
        Err(driver_wm_core::Error::EmptyKeySet)
    );
}

#[test]
fn attention_weights_rows_are_distributions() {
    let mut rng = Rng::new(14);
    let q = random(&mut rng, 4, 8);
    let k = random(&mut rng, 6, 8);
    for w in nn::attention_weights(&q, &k, 4).unwrap() {
        for r in 0..w.rows() {
            let s: f64 = w.row_slice(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(w.row_slice(r).iter().all(|&x| x >= 0.0));
        }
    }
}

#[test]
fn mlp_matches_manual_layers() {
    let mut rng = Rng::new(15);
    let spec = MlpSpec::new("f", &[3, 5, 2], Activation::Tanh, Activation::Identity);
    let mut ps = ParameterSet::new();
    nn::init_mlp(&mut ps, &mut rng, &spec).unwrap();
    let x = random(&mut rng, 4, 3);
    let out = nn::mlp_forward(&ps, &x, &spec).unwrap();
    let w0 = ps.get("f.0.w").unwrap();
    let b0 = ps.get("f.0.b").unwrap();
    let w1 = ps.get("f.1.w").unwrap();
    let b1 = ps.get("f.1.b").unwrap();
    for r in 0..4 {
        let h: Vec<f64> = (0..5)
            .map(|j| ((0..3).map(|i| x.get2(r, i) * w0.get2(i, j)).sum::<f64>() + b0.data()[j]).tanh())
            .collect();
        for j in 0..2 {
            let y = (0..5).map(|i| h[i] * w1.get2(i, j)).sum::<f64>() + b1.data()[j];
            assert!((out.get2(r, j) - y).abs() < 1e-12);
        }
    }
}

#[test]
fn mlp_shape_error_names_the_layer() {
    let mut rng = Rng::new(16);
    let spec = MlpSpec::new("enc", &[3, 4], Activation::Tanh, Activation::Identity);
    let mut ps = ParameterSet::new();
    nn::init_mlp(&mut ps, &mut rng, &spec).unwrap();
    let err = nn::mlp_forward(&ps, &Tensor::zeros(&[2, 5]), &spec).unwrap_err();
    assert!(format!("{}", err).contains("enc.0"));
}

fn composite_loss(g: &mut Graph<'_>) -> driver_wm_core::Result<Objective> {
    let a = g.param("a");
    let b = g.param("b");
    let x = g.param("x");
    let h = g.matmul(x, a);
    let h = g.add(h, b);
    let t = g.tanh(h);
    let s = g.sigmoid(h);
    let p = g.softmax_rows(t);
    let l = g.log_softmax_rows(s);
    let m = g.mul(p, l);
    let e = g.exp(t);
    let sq = g.square(e);
    let r = g.sqrt(sq);
    let c = g.concat_cols(&[m, r]);
    let mr = g.mean_rows(c);
    let sc = g.sum_cols(c);
    let s1 = g.sum(mr);
    let s2 = g.sum(sc);
    let ab = g.abs(s2);
    let total = g.add_all(&[s1, ab]);
    Ok(Objective::single(total))
}

#[test]
fn composite_tape_gradients_match_central_differences() {
    let mut rng = Rng::new(17);
    let mut ps = ParameterSet::new();
    ps.insert("a", random(&mut rng, 3, 4), true).unwrap();
    ps.insert("b", random(&mut rng, 1, 4), true).unwrap();
    ps.insert("x", random(&mut rng, 5, 3), true).unwrap();
    let report = finite_diff_check(&ps, composite_loss, 1e-6, 1e-6).unwrap();
    assert!(report.passed(), "{:?}", report.worst());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_quadratic_forms_have_exact_gradients(seed in 0u64..10_000, n in 1usize..5, m in 1usize..5) {
        let mut rng = Rng::new(seed);
        let mut ps = ParameterSet::new();
        ps.insert("w", random(&mut rng, n, m), true).unwrap();
        let target = random(&mut rng, n, m);
        let grads = driver_wm_core::numerics::grad_of_scalar(&ps, |g| {
            let w = g.param("w");
            let t = g.constant(target.clone());
            let d = g.sub(w, t);
            let s = g.square(d);
            Ok(Objective::single(g.sum(s)))
        }).unwrap().grads;
        let w = ps.get("w").unwrap();
        for i in 0..n * m {
            let expect = 2.0 * (w.data()[i] - target.data()[i]);
            prop_assert!((grads.get("w").unwrap().data()[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one(seed in 0u64..10_000, n in 1usize..6, m in 1usize..6) {
        let mut rng = Rng::new(seed);
        let x = random(&mut rng, n, m).map(|v| 20.0 * v);
        let mut g = Graph::new();
        let xv = g.constant(x);
        let p = g.softmax_rows(xv);
        let p = g.value(p);
        for r in 0..n {
            let s: f64 = p.row_slice(r).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
