use proptest::prelude::*;
use unic_tensor::{grad_wrt_input, Tape, Tensor, TensorError};

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

#[test]
fn matmul_identity_returns_operand() {
    let mut tape = Tape::new();
    let eye = tape.constant(t(&[3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.])).unwrap();
    let a = t(&[3, 3], &[1.5, -2., 3., 0.25, 5., -6., 7., 8., 9.5]);
    let av = tape.constant(a.clone()).unwrap();
    let out = tape.matmul(eye, av).unwrap();
    assert_eq!(tape.value(out).data(), a.data());
}

#[test]
fn conv2d_delta_kernel_is_identity() {
    let x = Tensor::from_fn(&[2, 1, 5, 6], |i| (i as f64 * 0.3).sin());
    let mut k = Tensor::zeros(&[1, 1, 3, 3]);
    k.data_mut()[4] = 1.0;
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone()).unwrap();
    let kv = tape.constant(k).unwrap();
    let y = tape.conv2d(xv, kv, 1, 1).unwrap();
    assert_eq!(tape.value(y), &x);
}

#[test]
fn mse_of_equal_tensors_is_zero() {
    let mut tape = Tape::new();
    let a = tape.constant(t(&[2, 2], &[1., 2., 3., 4.])).unwrap();
    let m = tape.mse(a, a).unwrap();
    assert_eq!(tape.value(m).item().unwrap(), 0.0);
}

#[test]
fn sum_of_squares_gradient() {
    let mut tape = Tape::new();
    let x = tape.param(t(&[3], &[1., 2., 3.])).unwrap();
    let sq = tape.mul(x, x).unwrap();
    let s = tape.sum(sq).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[2., 4., 6.]);
}

#[test]
fn constant_leaves_get_no_gradient() {
    let mut tape = Tape::new();
    let x = tape.param(t(&[2], &[1., 2.])).unwrap();
    let c = tape.constant(t(&[2], &[3., 4.])).unwrap();
    let p = tape.mul(x, c).unwrap();
    let s = tape.sum(p).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[3., 4.]);
    assert!(tape.grad(c).is_none());
}

#[test]
fn constant_only_ops_are_not_recorded() {
    let mut tape = Tape::new();
    let a = tape.constant(t(&[2], &[1., 2.])).unwrap();
    let b = tape.add(a, a).unwrap();
    let _ = tape.silu(b).unwrap();
    assert_eq!(tape.recorded_ops(), 0);
    let x = tape.param(t(&[2], &[1., 2.])).unwrap();
    let _ = tape.add(x, b).unwrap();
    assert_eq!(tape.recorded_ops(), 1);
}

#[test]
fn backward_twice_doubles_gradient() {
    let mut tape = Tape::new();
    let x = tape.param(t(&[3], &[0.5, -1.0, 2.0])).unwrap();
    let y = tape.silu(x).unwrap();
    let s = tape.sum(y).unwrap();
    tape.backward(s).unwrap();
    let once = tape.grad(x).unwrap().to_vec();
    tape.backward(s).unwrap();
    let twice = tape.grad(x).unwrap();
    for (a, b) in once.iter().zip(twice) {
        assert_eq!(2.0 * a, *b);
    }
    tape.zero_grad();
    assert!(tape.grad(x).is_none());
}

#[test]
fn backward_rejects_non_scalar_and_foreign_output() {
    let mut tape = Tape::new();
    let x = tape.param(t(&[2], &[1., 2.])).unwrap();
    assert!(matches!(tape.backward(x), Err(TensorError::NotScalar { .. })));
    let mut other = Tape::new();
    let y = other.param(t(&[1], &[1.])).unwrap();
    assert!(matches!(tape.backward(y), Err(TensorError::ForeignVar)));
}

#[test]
fn shape_mismatch_names_both_shapes() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3])).unwrap();
    let b = tape.constant(Tensor::zeros(&[3, 2])).unwrap();
    let msg = tape.add(a, b).unwrap_err().to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[3, 2]"), "{msg}");
}

#[test]
fn non_finite_inputs_are_rejected() {
    assert!(Tensor::new(vec![2], vec![1.0, f64::NAN]).is_err());
    let mut tape = Tape::new();
    let mut bad = Tensor::zeros(&[1]);
    bad.data_mut()[0] = f64::INFINITY;
    assert!(matches!(tape.leaf(bad), Err(TensorError::NonFinite { .. })));
    let big = tape.constant(Tensor::full(&[1], 1e200)).unwrap();
    assert!(matches!(tape.mul(big, big), Err(TensorError::NonFinite { .. })));
}

#[test]
fn grad_wrt_input_of_half_square_norm_is_identity() {
    let x = t(&[4], &[0.3, -1.2, 2.0, 0.0]);
    let g = grad_wrt_input(&x, |tape, v| {
        let sq = tape.mul(v, v)?;
        let s = tape.sum(sq)?;
        tape.scale(s, 0.5)
    })
    .unwrap();
    assert_eq!(g.data(), x.data());
}

#[test]
fn grad_wrt_input_of_constant_is_zero() {
    let x = t(&[3], &[1., 2., 3.]);
    let g = grad_wrt_input(&x, |tape, _| tape.constant(Tensor::scalar(4.0))).unwrap();
    assert_eq!(g.data(), &[0., 0., 0.]);
    let err = grad_wrt_input(&x, |_, v| Ok(v)).unwrap_err();
    assert!(matches!(err, TensorError::NotScalar { .. }));
}

#[test]
fn grad_wrt_input_leaves_parameters_untouched() {
    let mut model = Tape::new();
    let w = model.param(t(&[3], &[1., 2., 3.])).unwrap();
    let w_value = model.value(w).clone();
    let x = t(&[3], &[0.5, 0.5, 0.5]);
    let g = grad_wrt_input(&x, |tape, v| {
        let wc = tape.constant(w_value.clone())?;
        let p = tape.mul(v, wc)?;
        tape.sum(p)
    })
    .unwrap();
    assert_eq!(g.data(), &[1., 2., 3.]);
    assert!(model.grad(w).is_none());
}

fn loss(tape: &mut Tape, x: unic_tensor::Var, alpha: f64, beta: f64) -> unic_tensor::Result<unic_tensor::Var> {
    // alpha·sum(silu(x)) + beta·sum(x∘x)
    let f = tape.silu(x)?;
    let f = tape.sum(f)?;
    let f = tape.scale(f, alpha)?;
    let g = tape.mul(x, x)?;
    let g = tape.sum(g)?;
    let g = tape.scale(g, beta)?;
    tape.add(f, g)
}

proptest! {
    #[test]
    fn backward_is_linear(
        xs in proptest::collection::vec(-2.0f64..2.0, 1..8),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
    ) {
        let x = Tensor::new(vec![xs.len()], xs).unwrap();
        let combined = grad_wrt_input(&x, |t, v| loss(t, v, alpha, beta)).unwrap();
        let gf = grad_wrt_input(&x, |t, v| loss(t, v, 1.0, 0.0)).unwrap();
        let gg = grad_wrt_input(&x, |t, v| loss(t, v, 0.0, 1.0)).unwrap();
        for i in 0..x.numel() {
            let expect = alpha * gf.data()[i] + beta * gg.data()[i];
            prop_assert!((combined.data()[i] - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn serialization_round_trips(
        dims in proptest::collection::vec(1usize..5, 1..4),
        seed in any::<u64>(),
    ) {
        let n: usize = dims.iter().product();
        let data: Vec<f64> = (0..n).map(|i| ((i as u64 ^ seed) as f64).sin() * 1e3).collect();
        let x = Tensor::new(dims, data).unwrap();
        let bytes = unic_tensor::serialize::to_bytes(&x);
        let back = unic_tensor::serialize::read_tensor(&bytes[..]).unwrap();
        prop_assert_eq!(back, x);
    }
}

#[test]
fn tensor_files_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.tensor");
    let x = Tensor::from_fn(&[2, 3], |i| i as f64 - 2.5);
    unic_tensor::serialize::save(&path, &x).unwrap();
    assert_eq!(unic_tensor::serialize::load(&path).unwrap(), x);
}
