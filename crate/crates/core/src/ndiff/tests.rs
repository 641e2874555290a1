use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Values in `[lo, hi]` with random sign, keeping away from zero.
fn signed_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let m = rng.random_range(0.2..2.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

type Build = fn(&mut Tape, &[Var]) -> Result<Var, NdError>;

/// Reduces an arbitrary output to a scalar through fixed random weights so
/// every output coordinate contributes a distinct amount.
fn weighted_sum(tape: &mut Tape, out: Var, weights: &Tensor) -> Var {
    let w = tape.hadamard_const(out, weights).unwrap();
    tape.sum_all(w).unwrap()
}

fn check_primitive(name: &str, inputs: Vec<Tensor>, build: Build, rng: &mut ChaCha8Rng) -> f64 {
    let mut params = ParamSet::new();
    for (i, t) in inputs.into_iter().enumerate() {
        params.register(format!("x{i}"), t);
    }
    let eval = |p: &ParamSet| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = p.ids().map(|id| tape.param(id, p.get(id))).collect();
        let out = build(&mut tape, &vars).unwrap();
        (tape, out)
    };
    let (tape, out) = eval(&params);
    let shape = tape.value(out).shape().to_vec();
    let weights = random_tensor(rng, shape[0], shape[1], -1.0, 1.0);

    let (mut tape, out) = eval(&params);
    let loss = weighted_sum(&mut tape, out, &weights);
    let mut analytic = GradMap::zeros_like(&params);
    tape.backward(loss).unwrap().accumulate_into(&mut analytic).unwrap();

    let numeric = finite_diff(
        |p| {
            let (mut tape, out) = eval(p);
            let loss = weighted_sum(&mut tape, out, &weights);
            tape.value(loss).item()
        },
        &params,
        1e-6,
    );
    let err = relative_error(&analytic.flatten(), &numeric.flatten());
    assert!(err < 1e-5, "{name}: relative error {err:e}");
    err
}

#[test]
fn every_primitive_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let (n, k, m) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5));
        check_primitive(
            "matmul",
            vec![signed_tensor(&mut rng, n, k), signed_tensor(&mut rng, k, m)],
            |t, v| t.matmul(v[0], v[1]),
            &mut rng,
        );
        check_primitive(
            "add",
            vec![signed_tensor(&mut rng, n, k), signed_tensor(&mut rng, n, k)],
            |t, v| t.add(v[0], v[1]),
            &mut rng,
        );
        check_primitive(
            "sub",
            vec![signed_tensor(&mut rng, n, k), signed_tensor(&mut rng, n, k)],
            |t, v| t.sub(v[0], v[1]),
            &mut rng,
        );
        check_primitive("scale", vec![signed_tensor(&mut rng, n, k)], |t, v| t.scale(v[0], -1.7), &mut rng);
        check_primitive("relu", vec![signed_tensor(&mut rng, n, k)], |t, v| t.relu(v[0]), &mut rng);
        check_primitive("row_sum", vec![signed_tensor(&mut rng, n, k)], |t, v| t.row_sum(v[0]), &mut rng);
        check_primitive(
            "concat_rows",
            vec![signed_tensor(&mut rng, n, k), signed_tensor(&mut rng, m, k)],
            |t, v| t.concat_rows(&[v[0], v[1], v[0]]),
            &mut rng,
        );
        check_primitive(
            "hadamard_const",
            vec![signed_tensor(&mut rng, 2, 3)],
            |t, v| t.hadamard_const(v[0], &Tensor::matrix(2, 3, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap()),
            &mut rng,
        );
        check_primitive("sum_all", vec![signed_tensor(&mut rng, n, k)], |t, v| t.sum_all(v[0]), &mut rng);
        check_primitive(
            "log",
            vec![random_tensor(&mut rng, n, k, 0.5, 3.0)],
            |t, v| t.log(v[0]),
            &mut rng,
        );
        check_primitive("exp", vec![signed_tensor(&mut rng, n, k)], |t, v| t.exp(v[0]), &mut rng);
        check_primitive(
            "l2_norm_rows",
            vec![signed_tensor(&mut rng, n, k)],
            |t, v| t.l2_norm_rows(v[0]),
            &mut rng,
        );
        check_primitive(
            "cosine_sim",
            vec![signed_tensor(&mut rng, 1, k + 1), signed_tensor(&mut rng, 1, k + 1)],
            |t, v| t.cosine_sim(v[0], v[1]),
            &mut rng,
        );
        check_primitive(
            "log_sum_exp",
            vec![signed_tensor(&mut rng, n, k)],
            |t, v| t.log_sum_exp(v[0]),
            &mut rng,
        );
        check_primitive(
            "reshape",
            vec![signed_tensor(&mut rng, n, k)],
            |t, v| {
                let r = t.reshape(v[0], &[1, t.value(v[0]).numel()])?;
                t.exp(r)
            },
            &mut rng,
        );
    }
}

#[test]
fn random_composites_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..50 {
        check_primitive(
            "composite",
            vec![
                signed_tensor(&mut rng, 3, 4),
                signed_tensor(&mut rng, 4, 4),
                signed_tensor(&mut rng, 1, 4),
            ],
            |t, v| {
                let h = t.matmul(v[0], v[1])?;
                let h = t.relu(h)?;
                let s = t.row_sum(h)?;
                let s = t.add(s, v[2])?;
                let c = t.cosine_sim(s, v[2])?;
                let e = t.exp(s)?;
                let st = t.concat_rows(&[c, c])?;
                let l = t.log_sum_exp(st)?;
                let n = t.l2_norm_rows(e)?;
                t.add(l, n)
            },
            &mut rng,
        );
    }
}

#[test]
fn matmul_identity() {
    let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
    let mut tape = Tape::new();
    let i = tape.constant(Tensor::eye(3));
    let xv = tape.input(x.clone());
    let y = tape.matmul(i, xv).unwrap();
    assert_eq!(tape.value(y), &x);
}

#[test]
fn cosine_self_similarity_is_one() {
    let mut tape = Tape::new();
    let u = tape.input(Tensor::row_vector(vec![0.3, -2.0, 5.0]));
    let c = tape.cosine_sim(u, u).unwrap();
    approx::assert_abs_diff_eq!(tape.value(c).item(), 1.0, epsilon = 1e-15);
}

#[test]
fn cosine_rejects_zero_norm() {
    let mut tape = Tape::new();
    let u = tape.input(Tensor::row_vector(vec![0.0, 0.0]));
    let v = tape.input(Tensor::row_vector(vec![1.0, 0.0]));
    assert_eq!(tape.cosine_sim(u, v), Err(NdError::ZeroNorm));
}

#[test]
fn log_sum_exp_does_not_overflow() {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::row_vector(vec![1000.0, 1000.0]));
    let l = tape.log_sum_exp(x).unwrap();
    approx::assert_abs_diff_eq!(tape.value(l).item(), 1000.0 + 2f64.ln(), epsilon = 1e-12);
}

#[test]
fn shape_mismatch_reports_both_shapes() {
    let mut tape = Tape::new();
    let a = tape.input(Tensor::zeros(&[2, 3]));
    let b = tape.input(Tensor::zeros(&[2, 3]));
    let err = tape.matmul(a, b).unwrap_err();
    assert_eq!(
        err,
        NdError::ShapeMismatch {
            op: "matmul",
            left: vec![2, 3],
            right: vec![2, 3],
        }
    );
    let c = tape.input(Tensor::zeros(&[3, 2]));
    assert!(matches!(tape.add(a, c), Err(NdError::ShapeMismatch { op: "add", .. })));
}

#[test]
fn sum_all_gradient_is_ones() {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::matrix(2, 2, vec![1.0, -4.0, 2.5, 0.0]).unwrap());
    let s = tape.sum_all(x).unwrap();
    let g = tape.backward(s).unwrap();
    assert_eq!(g.wrt(x), Tensor::ones(&[2, 2]));
}

#[test]
fn relu_gradient_at_negative_and_zero() {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::row_vector(vec![-1.0, 2.0, 0.0]));
    let r = tape.relu(x).unwrap();
    let s = tape.sum_all(r).unwrap();
    let g = tape.backward(s).unwrap();
    assert_eq!(g.wrt(x).data(), &[0.0, 1.0, 0.0]);
}

#[test]
fn hadamard_const_gradient_equals_mask() {
    let mask = Tensor::row_vector(vec![1.0, 0.0, 1.0, 0.0]);
    let mut tape = Tape::new();
    let x = tape.input(Tensor::row_vector(vec![3.0, -1.0, 2.0, 7.0]));
    let h = tape.hadamard_const(x, &mask).unwrap();
    let s = tape.sum_all(h).unwrap();
    assert_eq!(tape.backward(s).unwrap().wrt(x), mask);
}

#[test]
fn backward_rejects_non_scalar_and_foreign_vars() {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::zeros(&[2, 2]));
    assert_eq!(tape.backward(x).unwrap_err(), NdError::NotScalar(vec![2, 2]));

    let mut other = Tape::new();
    let y = other.input(Tensor::scalar(1.0));
    assert!(matches!(tape.backward(y), Err(NdError::NotOnTape(_))));
}

#[test]
fn unused_parameters_get_zero_gradients() {
    let mut params = ParamSet::new();
    let a = params.register("a", Tensor::scalar(2.0));
    let b = params.register("b", Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap());
    let mut tape = Tape::new();
    let av = tape.param(a, params.get(a));
    let sq = tape.matmul(av, av).unwrap();
    let mut grads = GradMap::zeros_like(&params);
    tape.backward(sq).unwrap().accumulate_into(&mut grads).unwrap();
    assert_eq!(grads.get(a).item(), 4.0);
    assert_eq!(grads.get(b), &Tensor::zeros(&[1, 2]));
}

#[test]
fn finite_diff_on_polynomial_and_constant() {
    let mut params = ParamSet::new();
    let x = params.register("x", Tensor::scalar(3.0));
    let g = finite_diff(|p| p.get(x).item().powi(2), &params, 1e-6);
    approx::assert_abs_diff_eq!(g.get(x).item(), 6.0, epsilon = 1e-6);

    let g = finite_diff(|_| 42.0, &params, 1e-6);
    assert_eq!(g.get(x).item(), 0.0);
}

#[test]
fn non_finite_forward_is_an_error() {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::row_vector(vec![-1.0]));
    assert_eq!(tape.log(x), Err(NdError::NonFinite { op: "log" }));
}
