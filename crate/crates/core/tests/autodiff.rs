use ncgn_core::autodiff::{
    apply_bn_updates, central_difference, relative_error, BnState, Mlp, Mode, ParamStore, Session, Tape, Var,
};
use ncgn_core::Error;
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scalar(v: f64) -> Array2<f64> {
    Array2::from_elem((1, 1), v)
}

#[test]
fn square_derivative() {
    let mut tape = Tape::new();
    let x = tape.param(scalar(3.0));
    let y = tape.mul(x, x).unwrap();
    let g = tape.grad(y, &[x]).unwrap();
    assert_eq!(g[0][[0, 0]], 6.0);
}

#[test]
fn gelu_slope_at_zero_is_half() {
    let mut tape = Tape::new();
    let x = tape.param(scalar(0.0));
    let y = tape.gelu(x);
    let g = tape.grad(y, &[x]).unwrap();
    assert_eq!(g[0][[0, 0]], 0.5);
}

#[test]
fn non_scalar_output_rejected() {
    let mut tape = Tape::new();
    let x = tape.param(Array2::zeros((2, 1)));
    let y = tape.gelu(x);
    assert!(matches!(tape.grad(y, &[x]), Err(Error::NonScalarOutput([2, 1]))));
}

#[test]
fn foreign_variable_rejected() {
    let mut other = Tape::new();
    let stray = other.param(scalar(1.0));
    let mut tape = Tape::new();
    let x = tape.param(scalar(1.0));
    let y = tape.sum(x);
    assert!(matches!(tape.grad(y, &[stray]), Err(Error::ForeignVar(_))));
}

#[test]
fn segment_softmax_examples() {
    let mut tape = Tape::new();
    let l = tape.constant(array![[4.2], [1.5], [1.5], [0.0], [3f64.ln()]]);
    let a = tape.segment_softmax(l, &[0, 1, 1, 2, 2], 3).unwrap();
    let v = tape.value(a);
    assert_eq!(v[[0, 0]], 1.0);
    assert_eq!((v[[1, 0]], v[[2, 0]]), (0.5, 0.5));
    assert!((v[[3, 0]] - 0.25).abs() < 1e-15);
    assert!((v[[4, 0]] - 0.75).abs() < 1e-15);
}

#[test]
fn segment_softmax_empty_segment() {
    let mut tape = Tape::new();
    let l = tape.constant(array![[0.0], [1.0]]);
    assert!(matches!(tape.segment_softmax(l, &[0, 2], 3), Err(Error::EmptySegment(1))));
}

#[test]
fn segment_softmax_sums_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let n_seg = rng.gen_range(1..10);
        let mut seg: Vec<usize> = (0..n_seg).collect();
        seg.extend((0..rng.gen_range(0..40)).map(|_| rng.gen_range(0..n_seg)));
        let logits = Array2::from_shape_fn((seg.len(), 1), |_| rng.gen_range(-30.0..30.0));
        let a = ncgn_core::autodiff::segment_softmax_values(&logits, &seg, n_seg).unwrap();
        let mut sums = vec![0.0; n_seg];
        for (e, &s) in seg.iter().enumerate() {
            assert!(a[[e, 0]] > 0.0);
            sums[s] += a[[e, 0]];
        }
        assert!(sums.iter().all(|s| (s - 1.0).abs() <= 1e-12));
    }
}

fn bn_train_values(x: Array2<f64>) -> Array2<f64> {
    let mut tape = Tape::new();
    let c = x.ncols();
    let x = tape.constant(x);
    let g = tape.constant(Array2::ones((1, c)));
    let b = tape.constant(Array2::zeros((1, c)));
    let (y, _) = tape.batch_norm_train(x, g, b).unwrap();
    tape.value(y).clone()
}

#[test]
fn batch_norm_examples() {
    assert_eq!(bn_train_values(array![[2.0], [2.0], [2.0]]), array![[0.0], [0.0], [0.0]]);
    let y = bn_train_values(array![[0.0], [2.0]]);
    assert!((y[[0, 0]] + 1.0).abs() < 1e-5 && (y[[1, 0]] - 1.0).abs() < 1e-5);

    let mut tape = Tape::new();
    assert!(matches!(
        {
            let x = tape.constant(Array2::zeros((0, 1)));
            let g = tape.constant(Array2::ones((1, 1)));
            let b = tape.constant(Array2::zeros((1, 1)));
            tape.batch_norm_train(x, g, b)
        },
        Err(Error::EmptyBatch)
    ));
}

#[test]
fn batch_norm_eval_uses_running_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let mut stats = Vec::new();
    let mlp = Mlp::new(&mut store, &mut stats, "m", &[1, 1, 1], &mut rng);
    let bn = mlp.norms[0].clone();
    let running: Vec<BnState> = stats.clone();
    let mut s = Session::new(&store, &running, Mode::Train);
    let x = s.constant(array![[0.0], [2.0]]);
    s.batch_norm(&bn, x).unwrap();
    let updates = s.into_bn_updates();
    apply_bn_updates(&mut stats, &updates);
    assert_eq!(stats[0].mean[0], 1.0);
    let mut e = Session::new(&store, &stats, Mode::Eval);
    let x = e.constant(array![[1.0]]);
    let y = e.batch_norm(&bn, x).unwrap();
    assert_eq!(e.value(y)[[0, 0]], 0.0);
}

/// Checks `build(tape, leaves) -> scalar` against central differences over every leaf entry.
/// Near-zero gradients are compared against a floor proportional to the rounding
/// error of the difference quotient, which grows with |f|.
fn check_gradients<F>(leaves: &[Array2<f64>], build: F, tol: f64) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|l| tape.param(l.clone())).collect();
    let out = build(&mut tape, &vars);
    let f0 = tape.value(out)[[0, 0]];
    let grads = tape.grad(out, &vars).unwrap();
    let flat: Vec<f64> = leaves.iter().flat_map(|l| l.iter().copied()).collect();
    let numeric = central_difference(&flat, 1e-4, |x| {
        let mut tape = Tape::new();
        let mut off = 0;
        let vars: Vec<Var> = leaves
            .iter()
            .map(|l| {
                let v = Array2::from_shape_vec(l.raw_dim(), x[off..off + l.len()].to_vec()).unwrap();
                off += l.len();
                tape.constant(v)
            })
            .collect();
        let out = build(&mut tape, &vars);
        tape.value(out)[[0, 0]]
    });
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.iter().copied()).collect();
    let floor = 1e-6 * f0.abs().max(1.0);
    let worst = analytic.iter().zip(&numeric).map(|(a, n)| relative_error(*a, *n, floor)).fold(0.0, f64::max);
    assert!(worst <= tol, "worst relative error {worst}");
    worst
}

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.gen_range(-1.0..1.0))
}

#[test]
fn two_layer_mlp_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let leaves = vec![
        rand_mat(&mut rng, 5, 4),
        rand_mat(&mut rng, 4, 6),
        rand_mat(&mut rng, 1, 6),
        rand_mat(&mut rng, 6, 3),
        rand_mat(&mut rng, 1, 3),
    ];
    let target = rand_mat(&mut rng, 5, 3);
    check_gradients(
        &leaves,
        |t, v| {
            let h = t.matmul(v[0], v[1]).unwrap();
            let h = t.add_bias(h, v[2]).unwrap();
            let h = t.gelu(h);
            let o = t.matmul(h, v[3]).unwrap();
            let o = t.add_bias(o, v[4]).unwrap();
            t.mse(o, &target).unwrap()
        },
        1e-4,
    );
}

/// Random composites of the differentiable primitives, 100 trials.
#[test]
fn random_composites_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..100 {
        let n = rng.gen_range(2..9);
        let a = rng.gen_range(1..7);
        let b = rng.gen_range(1..7);
        let n_seg = rng.gen_range(1..=n);
        let mut seg: Vec<usize> = (0..n_seg).collect();
        seg.extend((n_seg..n).map(|_| rng.gen_range(0..n_seg)));
        let gather_idx: Vec<usize> = (0..rng.gen_range(1..12)).map(|_| rng.gen_range(0..n)).collect();
        let scatter_idx: Vec<usize> = (0..gather_idx.len()).map(|_| rng.gen_range(0..n)).collect();
        let leaves = vec![
            rand_mat(&mut rng, n, a),
            rand_mat(&mut rng, a, b),
            rand_mat(&mut rng, 1, b),
            Array2::from_shape_fn((1, b), |_| rng.gen_range(0.5..1.5)),
            rand_mat(&mut rng, 1, b),
            rand_mat(&mut rng, b, 1),
            rand_mat(&mut rng, n, b),
        ];
        let variant = trial % 4;
        check_gradients(
            &leaves,
            |t, v| {
                let h = t.matmul(v[0], v[1]).unwrap();
                let h = t.add_bias(h, v[2]).unwrap();
                let h = match variant {
                    0 => t.batch_norm_train(h, v[3], v[4]).unwrap().0,
                    1 => t.leaky_relu(h),
                    2 => t.sigmoid(h),
                    _ => t.gelu(h),
                };
                let h = t.mul(h, v[6]).unwrap();
                let h = t.sub(h, v[6]).unwrap();
                let logits = t.matmul(h, v[5]).unwrap();
                let logits = t.leaky_relu(logits);
                let alpha = t.segment_softmax(logits, &seg, n_seg).unwrap();
                let w = t.mul_col(h, alpha).unwrap();
                let w = t.mul_row(w, v[3]).unwrap();
                let g = t.gather(w, &gather_idx).unwrap();
                let sc = t.scatter_add(g, &scatter_idx, n).unwrap();
                let cat = t.concat_cols(&[sc, h]).unwrap();
                let cat = t.gelu(cat);
                let rows = t.concat_rows(&[cat, cat]).unwrap();
                let s = t.scale(rows, 0.7);
                let s = t.add(s, s).unwrap();
                let m = t.mean(s);
                let q = t.sum(s);
                let q = t.mul(q, q).unwrap();
                t.add(m, q).unwrap()
            },
            1e-4,
        );
    }
}

#[test]
fn ops_are_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut tape = Tape::new();
        let x = tape.param(rand_mat(&mut rng, 6, 4));
        let w = tape.param(rand_mat(&mut rng, 4, 4));
        let h = tape.matmul(x, w).unwrap();
        let h = tape.gelu(h);
        let s = tape.sum(h);
        tape.grad(s, &[x, w]).unwrap()
    };
    assert_eq!(run(), run());
}
