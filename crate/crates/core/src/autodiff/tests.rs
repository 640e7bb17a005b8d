use super::*;
use alloc::vec;
use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Builds random parameters of the given shapes, applies `build`, reduces
/// the output with fixed random weights, and returns the finite-difference
/// relative error of the gradient.
fn op_grad_error<F>(shapes: &[(usize, usize)], seed: u64, build: F) -> f64
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for (i, &(r, c)) in shapes.iter().enumerate() {
        store.add_uniform(&alloc::format!("p{i}"), r, c, 1.0, &mut rng);
    }
    let weights_seed = rng.gen::<u64>();
    let forward = |store: &ParamStore, backward: Option<&mut Grads>| -> Result<f64> {
        let mut g = Graph::new(store);
        let vars: Vec<Var> = store.ids().map(|id| g.param(id)).collect();
        let out = build(&mut g, &vars)?;
        let (r, c) = g.shape(out);
        let mut wr = ChaCha8Rng::seed_from_u64(weights_seed);
        let w = g.constant(r, c, (0..r * c).map(|_| wr.gen_range(-1.0..1.0)).collect());
        let prod = g.mul(out, w)?;
        let loss = g.sum(prod);
        if let Some(grads) = backward {
            g.backward(loss);
            g.accumulate_param_grads(grads);
        }
        Ok(g.scalar(loss))
    };
    let mut grads = Grads::zeros_like(&store);
    forward(&store, Some(&mut grads)).unwrap();
    let check = finite_difference_check(&mut store, &grads, |s| forward(s, None), DEFAULT_FD_EPSILON, None).unwrap();
    check.max_rel_error
}

#[test]
fn softmax_of_zeros_is_uniform() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let x = g.constant(1, 2, vec![0.0, 0.0]);
    let y = g.softmax(x);
    assert_eq!(g.value(y), &[0.5, 0.5]);
}

#[test]
fn tanh_at_zero() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let x = g.input(1, 1, vec![0.0]);
    let y = g.tanh(x);
    assert_eq!(g.scalar(y), 0.0);
    g.backward(y);
    assert_eq!(g.grad(x).unwrap(), &[1.0]);
}

#[test]
fn identity_matmul_passes_gradient_through() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let eye = g.constant(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    let x = g.input(3, 1, vec![1.0, -2.0, 3.0]);
    let y = g.matmul(eye, x).unwrap();
    assert_eq!(g.value(y), &[1.0, -2.0, 3.0]);
    let up = g.constant(3, 1, vec![0.5, 0.25, -1.0]);
    let prod = g.mul(y, up).unwrap();
    let loss = g.sum(prod);
    g.backward(loss);
    assert_eq!(g.grad(x).unwrap(), &[0.5, 0.25, -1.0]);
}

#[test]
fn reused_tensor_accumulates() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let x = g.input(1, 1, vec![1.5]);
    let y = g.add(x, x).unwrap();
    g.backward(y);
    assert_eq!(g.grad(x).unwrap(), &[2.0]);
}

#[test]
fn shape_errors_name_the_op() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let a = g.constant(2, 3, vec![0.0; 6]);
    let b = g.constant(2, 3, vec![0.0; 6]);
    let err = g.matmul(a, b).unwrap_err();
    assert!(matches!(err, Error::Shape { op: "matmul", .. }), "{err}");
    let row = g.constant(1, 3, vec![0.0; 3]);
    assert!(matches!(g.add(a, row), Err(Error::Shape { op: "add", .. })));
}

#[test]
fn softmax_sums_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let store = ParamStore::new();
    for _ in 0..200 {
        let n = rng.gen_range(1..40);
        let mut g = Graph::new(&store);
        let x = g.constant(1, n, (0..n).map(|_| rng.gen_range(-30.0..30.0)).collect());
        let y = g.softmax(x);
        let s: f64 = g.value(y).iter().sum();
        assert!(g.value(y).iter().all(|&p| p >= 0.0));
        assert!((s - 1.0).abs() < 1e-9);
    }
}

#[test]
fn primitive_gradients_match_finite_differences() {
    type Build = fn(&mut Graph<'_>, &[Var]) -> Result<Var>;
    let cases: &[(&str, &[(usize, usize)], Build)] = &[
        ("matmul", &[(3, 4), (4, 2)], |g, v| g.matmul(v[0], v[1])),
        ("matmul_nt", &[(3, 4), (5, 4)], |g, v| g.matmul_nt(v[0], v[1])),
        ("add", &[(2, 3), (2, 3)], |g, v| g.add(v[0], v[1])),
        ("add_row", &[(4, 3), (1, 3)], |g, v| g.add_row(v[0], v[1])),
        ("mul", &[(2, 3), (2, 3)], |g, v| g.mul(v[0], v[1])),
        ("scale", &[(2, 2)], |g, v| Ok(g.scale(v[0], -1.7))),
        ("tanh", &[(2, 5)], |g, v| Ok(g.tanh(v[0]))),
        ("sigmoid", &[(3, 3)], |g, v| Ok(g.sigmoid(v[0]))),
        ("softmax", &[(1, 6)], |g, v| Ok(g.softmax(v[0]))),
        ("gather", &[(5, 3)], |g, v| g.gather(v[0], 2)),
        ("concat", &[(1, 2), (1, 3), (1, 1)], |g, v| g.concat_cols(&[v[0], v[1], v[2]])),
        ("slice", &[(2, 6)], |g, v| g.slice_cols(v[0], 1, 3)),
        ("stack", &[(1, 3), (1, 3)], |g, v| g.stack_rows(&[v[0], v[1], v[0]])),
        ("reshape", &[(3, 2)], |g, v| g.reshape(v[0], 1, 6)),
        ("add_n", &[(2, 2), (2, 2), (2, 2)], |g, v| g.add_n(&[v[0], v[1], v[2]])),
        ("nll", &[(1, 7)], |g, v| g.nll(v[0], 3)),
        ("conv1d_maxpool", &[(9, 6), (4, 18), (1, 4)], |g, v| g.conv1d_maxpool(v[0], v[1], v[2])),
        ("conv_same", &[(1, 7), (3, 4)], |g, v| g.conv_same(v[0], v[1])),
        ("conv_same_wide", &[(1, 3), (2, 9)], |g, v| g.conv_same(v[0], v[1])),
    ];
    for (name, shapes, build) in cases {
        for seed in 0..3 {
            let err = op_grad_error(shapes, seed, build);
            assert!(err < 1e-4, "{name} seed {seed}: relative error {err}");
        }
    }
}

#[test]
fn lstm_zero_params_closed_forms() {
    let mut store = ParamStore::new();
    let p = LstmParams {
        weight: store.add_zeros("w", 8, 5),
        bias: store.add_zeros("b", 1, 8),
        hidden: 2,
    };
    let mut g = Graph::new(&store);
    let x = g.constant(1, 3, vec![0.3, -1.0, 2.0]);
    let h0 = g.constant(1, 2, vec![0.0, 0.0]);
    let c0 = g.constant(1, 2, vec![0.0, 0.0]);
    let s = lstm_cell(&mut g, x, LstmState { h: h0, c: c0 }, p).unwrap();
    assert_eq!(g.value(s.h), &[0.0, 0.0]);
    assert_eq!(g.value(s.c), &[0.0, 0.0]);

    let c = g.constant(1, 2, vec![1.0, -3.0]);
    let s = lstm_cell(&mut g, x, LstmState { h: h0, c }, p).unwrap();
    assert_eq!(g.value(s.c), &[0.5, -1.5]);
    assert_abs_diff_eq!(g.value(s.h)[0], 0.5 * libm::tanh(0.5), epsilon = 1e-15);
    assert_abs_diff_eq!(g.value(s.h)[1], 0.5 * libm::tanh(-1.5), epsilon = 1e-15);
}

#[test]
fn lstm_gradients_match_finite_differences() {
    // weight, bias, x, h_prev, c_prev; two chained steps.
    let err = op_grad_error(&[(12, 7), (1, 12), (1, 4), (1, 3), (1, 3)], 11, |g, v| {
        let p = LstmParams {
            weight: ParamId(0),
            bias: ParamId(1),
            hidden: 3,
        };
        let s = lstm_cell(g, v[2], LstmState { h: v[3], c: v[4] }, p)?;
        let s = lstm_cell(g, v[2], s, p)?;
        g.concat_cols(&[s.h, s.c])
    });
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn conv_maxpool_closed_form() {
    let mut store = ParamStore::new();
    let f = store.add("f", 1, 18, vec![1.0; 18]);
    let b = store.add_zeros("b", 1, 1);
    let mut g = Graph::new(&store);
    let x = g.constant(10, 6, vec![1.0; 60]);
    let (fv, bv) = (g.param(f), g.param(b));
    let y = g.conv1d_maxpool(x, fv, bv).unwrap();
    assert_eq!(g.value(y), &[18.0]);
}

#[test]
fn conv_maxpool_is_shift_invariant_and_routes_gradient_to_argmax() {
    let mut store = ParamStore::new();
    let mut filt = vec![0.0; 18];
    filt[6] = 1.0; // middle row, channel 0
    let f = store.add("f", 1, 18, filt);
    let b = store.add_zeros("b", 1, 1);
    let mut outputs = Vec::new();
    for pos in [2usize, 5, 8] {
        let mut g = Graph::new(&store);
        let mut data = vec![0.0; 60];
        data[pos * 6] = 4.0;
        let x = g.input(10, 6, data);
        let (fv, bv) = (g.param(f), g.param(b));
        let y = g.conv1d_maxpool(x, fv, bv).unwrap();
        outputs.push(g.scalar(y));
        g.backward(y);
        let gx = g.grad(x).unwrap();
        let nonzero: Vec<usize> = (0..60).filter(|&i| gx[i] != 0.0).collect();
        assert_eq!(nonzero, vec![pos * 6]);
    }
    assert_eq!(outputs, vec![4.0, 4.0, 4.0]);
}

#[test]
fn conv_maxpool_ties_pick_first_position() {
    let mut store = ParamStore::new();
    let f = store.add("f", 1, 6, vec![1.0; 6]);
    let b = store.add_zeros("b", 1, 1);
    let mut g = Graph::new(&store);
    let x = g.input(4, 6, vec![1.0; 24]);
    let (fv, bv) = (g.param(f), g.param(b));
    let y = g.conv1d_maxpool(x, fv, bv).unwrap();
    g.backward(y);
    let gx = g.grad(x).unwrap();
    assert!(gx[..6].iter().all(|&v| v == 1.0));
    assert!(gx[6..].iter().all(|&v| v == 0.0));
}

#[test]
fn conv_maxpool_rejects_short_input() {
    let mut store = ParamStore::new();
    let f = store.add_zeros("f", 2, 30);
    let b = store.add_zeros("b", 1, 2);
    let mut g = Graph::new(&store);
    let x = g.constant(4, 6, vec![0.0; 24]);
    let (fv, bv) = (g.param(f), g.param(b));
    assert!(matches!(g.conv1d_maxpool(x, fv, bv), Err(Error::Contract(_))));
}

#[test]
fn conv_same_reproduces_filter_around_impulse() {
    let mut store = ParamStore::new();
    let f = store.add("f", 1, 5, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    let mut g = Graph::new(&store);
    let mut impulse = vec![0.0; 9];
    impulse[4] = 1.0;
    let a = g.constant(1, 9, impulse);
    let fv = g.param(f);
    let out = g.conv_same(a, fv).unwrap();
    assert_eq!(g.value(out), &[0.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 0.0, 0.0]);

    // Short signal: one column per position regardless of filter width.
    let wide = store.clone();
    let mut store2 = wide;
    let w40 = store2.add("w40", 5, 40, vec![0.1; 200]);
    let mut g = Graph::new(&store2);
    let a = g.constant(1, 3, vec![0.2, 0.3, 0.5]);
    let fv = g.param(w40);
    let out = g.conv_same(a, fv).unwrap();
    assert_eq!(g.shape(out), (3, 5));
}

#[test]
fn adam_first_step_moves_by_lr() {
    let mut store = ParamStore::new();
    let w = store.add("w", 1, 3, vec![1.0, 1.0, 1.0]);
    let mut grads = Grads::zeros_like(&store);
    grads.get_mut(w).copy_from_slice(&[0.3, -2.0, 1e-3]);
    let mut adam = AdamState::new(&store, 0.01, AdamConfig::default());
    adam.step(&mut store, &grads).unwrap();
    assert_eq!(adam.t, 1);
    let v = store.values(w);
    assert_abs_diff_eq!(v[0], 0.99, epsilon = 1e-6);
    assert_abs_diff_eq!(v[1], 1.01, epsilon = 1e-6);
    assert_abs_diff_eq!(v[2], 0.99, epsilon = 1e-4);
}

#[test]
fn adam_zero_gradient_leaves_params() {
    let mut store = ParamStore::new();
    let w = store.add("w", 1, 2, vec![0.5, -0.5]);
    let grads = Grads::zeros_like(&store);
    let mut adam = AdamState::new(&store, 0.1, AdamConfig::default());
    for _ in 0..10 {
        adam.step(&mut store, &grads).unwrap();
    }
    assert_eq!(store.values(w), &[0.5, -0.5]);
}

#[test]
fn adam_minimizes_square() {
    let mut store = ParamStore::new();
    let w = store.add("w", 1, 1, vec![1.0]);
    let mut adam = AdamState::new(&store, 0.1, AdamConfig::default());
    let mut steps = None;
    for step in 1..=200 {
        let mut grads = Grads::zeros_like(&store);
        grads.get_mut(w)[0] = 2.0 * store.values(w)[0];
        adam.step(&mut store, &grads).unwrap();
        if store.values(w)[0].abs() < 0.1 {
            steps = Some(step);
            break;
        }
    }
    assert!(steps.is_some(), "w = {}", store.values(w)[0]);
}

#[test]
fn adam_rejects_non_finite_gradient() {
    let mut store = ParamStore::new();
    let w = store.add("decoder.weight", 1, 1, vec![1.0]);
    let mut grads = Grads::zeros_like(&store);
    grads.get_mut(w)[0] = f64::NAN;
    let mut adam = AdamState::new(&store, 0.1, AdamConfig::default());
    let err = adam.step(&mut store, &grads).unwrap_err();
    assert!(alloc::format!("{err}").contains("decoder.weight"));
    assert_eq!(store.values(w), &[1.0]);
}

#[test]
fn dropout_identity_cases() {
    let store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = Graph::new(&store);
    let x = g.constant(1, 4, vec![1.0, 2.0, 3.0, 4.0]);
    assert_eq!(g.dropout(x, 0.0, true, &mut rng).unwrap(), x);
    assert_eq!(g.dropout(x, 0.3, false, &mut rng).unwrap(), x);
    assert!(g.dropout(x, 1.0, true, &mut rng).is_err());
}

#[test]
fn dropout_statistics() {
    let store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut g = Graph::new(&store);
    let n = 200_000;
    let x = g.constant(1, n, vec![1.0; n]);
    let y = g.dropout(x, 0.3, true, &mut rng).unwrap();
    let v = g.value(y);
    let zero_frac = v.iter().filter(|&&e| e == 0.0).count() as f64 / n as f64;
    let mean = v.iter().sum::<f64>() / n as f64;
    assert!((zero_frac - 0.3).abs() < 0.02, "zero fraction {zero_frac}");
    assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
}

#[test]
fn finite_difference_of_square() {
    let mut store = ParamStore::new();
    let w = store.add("w", 1, 1, vec![3.0]);
    let mut grads = Grads::zeros_like(&store);
    grads.get_mut(w)[0] = 6.0;
    let loss = |s: &ParamStore| -> Result<f64> { Ok(s.values(w)[0] * s.values(w)[0]) };
    let check = finite_difference_check(&mut store, &grads, loss, 1e-5, None).unwrap();
    assert!(check.max_rel_error < 1e-8, "{check:?}");
    assert_eq!(store.values(w), &[3.0]);
    assert!(matches!(
        finite_difference_check(&mut store, &grads, loss, 0.0, None),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn finite_difference_detects_nondeterminism() {
    let mut store = ParamStore::new();
    store.add("w", 1, 1, vec![3.0]);
    let grads = Grads::zeros_like(&store);
    let mut calls = 0.0;
    let loss = |_: &ParamStore| -> Result<f64> {
        calls += 1.0;
        Ok(calls)
    };
    assert!(matches!(
        finite_difference_check(&mut store, &grads, loss, 1e-5, None),
        Err(Error::InvalidArgument(_))
    ));
}
