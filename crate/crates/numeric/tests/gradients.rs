use proptest::prelude::*;
use zsgan_numeric::*;

/// Parameters of a single layer plus its input, so `dx` is checked too.
fn layer_store(rng: &mut RngStream, n: usize, din: usize, dout: usize) -> (ParamStore<f64>, [ParamId; 3]) {
    let mut s = ParamStore::new();
    let x = s.add("x", rng.normal_matrix(n, din)).unwrap();
    let w = s.add("w", rng.normal_matrix(din, dout)).unwrap();
    let b = s.add("b", rng.normal_matrix(1, dout)).unwrap();
    (s, [x, w, b])
}

fn check_dense(act: Activation, seed: u64, n: usize, din: usize, dout: usize) -> GradCheckReport {
    let mut rng = RngStream::new(seed, 0);
    let (mut store, [x, w, b]) = layer_store(&mut rng, n, din, dout);
    let probe: Matrix<f64> = rng.normal_matrix(n, dout);
    grad_check(
        &mut store,
        |s: &mut ParamStore<f64>| {
            let (y, cache) = dense_forward(s.value(x), s.value(w), s.value(b), act)?;
            let f: f64 = y.data().iter().zip(probe.data()).map(|(a, c)| a * c).sum();
            let (dx, dw, db) = dense_backward(&cache, &probe)?;
            s.accumulate_grad(x, &dx)?;
            s.accumulate_grad(w, &dw)?;
            s.accumulate_grad(b, &db)?;
            Ok(f)
        },
        GradCheckConfig {
            h: 1e-5,
            tol: 1e-4,
            floor: 1e-8,
        },
    )
    .unwrap()
}

#[test]
fn random_3x4_layer_matches_finite_differences() {
    for act in [Activation::Identity, Activation::Relu, Activation::Tanh, Activation::Sigmoid] {
        let report = check_dense(act, 42, 3, 4, 5);
        assert!(report.passed(), "{act:?}: {report:?}");
    }
}

#[test]
fn hundred_random_layers_within_1e6() {
    let acts = [Activation::Identity, Activation::Relu, Activation::Tanh, Activation::Sigmoid];
    let mut shapes = RngStream::new(9, 1);
    for trial in 0..100u64 {
        let (n, din, dout) = (1 + shapes.below(4), 1 + shapes.below(5), 1 + shapes.below(5));
        let act = acts[trial as usize % 4];
        let mut rng = RngStream::new(trial, 2);
        let (mut store, [x, w, b]) = layer_store(&mut rng, n, din, dout);
        let probe: Matrix<f64> = rng.normal_matrix(n, dout);
        let report = grad_check(
            &mut store,
            |s: &mut ParamStore<f64>| {
                let (y, cache) = dense_forward(s.value(x), s.value(w), s.value(b), act)?;
                let f: f64 = y.data().iter().zip(probe.data()).map(|(a, c)| a * c).sum();
                let (dx, dw, db) = dense_backward(&cache, &probe)?;
                s.accumulate_grad(x, &dx)?;
                s.accumulate_grad(w, &dw)?;
                s.accumulate_grad(b, &db)?;
                Ok(f)
            },
            GradCheckConfig::f64_default(),
        )
        .unwrap();
        assert!(report.passed(), "trial {trial} {act:?} ({n},{din},{dout}): {report:?}");
    }
}

#[test]
fn layer_bound_backward_accumulates_same_gradient() {
    let mut rng = RngStream::new(3, 0);
    let mut store = ParamStore::<f64>::new();
    let layer = Dense::new(&mut store, "fc", 4, 3, Activation::Tanh, &mut rng).unwrap();
    let x: Matrix<f64> = rng.normal_matrix(5, 4);
    let dy: Matrix<f64> = rng.normal_matrix(5, 3);
    let (_, cache) = layer.forward(&store, &x).unwrap();
    layer.backward(&mut store, &cache, &dy).unwrap();
    layer.backward(&mut store, &cache, &dy).unwrap();
    let (_, free_cache) =
        dense_forward(&x, store.value(layer.weight_id()), store.value(layer.bias_id()), Activation::Tanh).unwrap();
    let (_, dw, _) = dense_backward(&free_cache, &dy).unwrap();
    for (g, d) in store.grad(layer.weight_id()).data().iter().zip(dw.data()) {
        assert!((g - 2.0 * d).abs() < 1e-12);
    }
}

#[test]
fn softmax_cross_entropy_random_4x5_matches_finite_differences() {
    for seed in 0..100u64 {
        let mut rng = RngStream::new(seed, 5);
        let mut s = ParamStore::<f64>::new();
        let id = s.add("logits", rng.normal_matrix(4, 5)).unwrap();
        let targets: Vec<usize> = (0..4).map(|_| rng.below(5)).collect();
        let report = grad_check(
            &mut s,
            |s: &mut ParamStore<f64>| {
                let (loss, g) = softmax_cross_entropy(s.value(id), &targets)?;
                s.accumulate_grad(id, &g)?;
                Ok(loss)
            },
            GradCheckConfig::f64_default(),
        )
        .unwrap();
        assert!(report.passed(), "seed {seed}: {report:?}");
    }
}

#[test]
fn l2_normalize_matches_finite_differences() {
    for seed in 0..100u64 {
        let mut rng = RngStream::new(seed, 6);
        let mut s = ParamStore::<f64>::new();
        let id = s.add("x", rng.normal_matrix(3, 4)).unwrap();
        let probe: Matrix<f64> = rng.normal_matrix(3, 4);
        let report = grad_check(
            &mut s,
            |s: &mut ParamStore<f64>| {
                let (y, norms) = l2_normalize_rows(s.value(id));
                let f: f64 = y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum();
                let dx = l2_normalize_backward(&y, &norms, &probe)?;
                s.accumulate_grad(id, &dx)?;
                Ok(f)
            },
            GradCheckConfig::f64_default(),
        )
        .unwrap();
        assert!(report.passed(), "seed {seed}: {report:?}");
    }
}

#[test]
fn f32_layer_within_1e3() {
    for seed in 0..100u64 {
        let mut rng = RngStream::new(seed, 7);
        let mut s = ParamStore::<f32>::new();
        let x = s.add("x", rng.normal_matrix(3, 4)).unwrap();
        let w = s.add("w", rng.normal_matrix(4, 3)).unwrap();
        let b = s.add("b", rng.normal_matrix(1, 3)).unwrap();
        let probe: Matrix<f32> = rng.normal_matrix(3, 3);
        let report = grad_check(
            &mut s,
            |s: &mut ParamStore<f32>| {
                let (y, cache) = dense_forward(s.value(x), s.value(w), s.value(b), Activation::Tanh)?;
                let f: f32 = y.data().iter().zip(probe.data()).map(|(a, c)| a * c).sum();
                let (dx, dw, db) = dense_backward(&cache, &probe)?;
                s.accumulate_grad(x, &dx)?;
                s.accumulate_grad(w, &dw)?;
                s.accumulate_grad(b, &db)?;
                Ok(f)
            },
            GradCheckConfig::f32_default(),
        )
        .unwrap();
        assert!(report.passed(), "seed {seed}: {report:?}");
    }
}

proptest! {
    #[test]
    fn cross_entropy_is_translation_invariant(
        logits in proptest::collection::vec(-20.0f64..20.0, 12),
        shift in -50.0f64..50.0,
        t0 in 0usize..4, t1 in 0usize..4, t2 in 0usize..4,
    ) {
        let a = Matrix::from_vec(3, 4, logits.clone()).unwrap();
        let b = a.map(|x| x + shift);
        let targets = [t0, t1, t2];
        let (la, _) = softmax_cross_entropy(&a, &targets).unwrap();
        let (lb, _) = softmax_cross_entropy(&b, &targets).unwrap();
        prop_assert!((la - lb).abs() <= 1e-12 * la.abs().max(1.0));
    }

    #[test]
    fn same_seed_same_stream_bitwise(seed in any::<u64>(), stream in 0u64..1000) {
        let mut a = RngStream::new(seed, stream);
        let mut b = RngStream::new(seed, stream);
        for _ in 0..16 {
            prop_assert_eq!(a.normal().to_bits(), b.normal().to_bits());
        }
    }
}
