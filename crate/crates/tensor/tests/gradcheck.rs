//! Backward rules checked against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unic_tensor::{Tape, Tensor, Var};

const STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
const TRIALS: usize = 100;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-2.0..2.0))
}

/// Builds a scalar from the inputs; each input is a differentiated leaf.
type Build = dyn Fn(&mut Tape, &[Var]) -> unic_tensor::Result<Var>;

fn eval(inputs: &[Tensor], build: &Build) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone()).unwrap()).collect();
    let out = build(&mut tape, &vars).unwrap();
    tape.value(out).item().unwrap()
}

/// Relative error with an absolute floor so near-zero entries compare sanely.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn check(name: &str, inputs: &[Tensor], build: &Build) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone()).unwrap()).collect();
    let out = build(&mut tape, &vars).unwrap();
    tape.backward(out).unwrap();
    for (which, (t, v)) in inputs.iter().zip(&vars).enumerate() {
        let analytic = tape.grad(*v).map(<[f64]>::to_vec).unwrap_or(vec![0.0; t.numel()]);
        for i in 0..t.numel() {
            let mut plus = inputs.to_vec();
            plus[which].data_mut()[i] += STEP;
            let mut minus = inputs.to_vec();
            minus[which].data_mut()[i] -= STEP;
            let fd = (eval(&plus, build) - eval(&minus, build)) / (2.0 * STEP);
            let err = rel_err(analytic[i], fd);
            assert!(
                err < REL_TOL,
                "{name}: input {which} elem {i}: analytic {} vs fd {fd} (rel {err:e})",
                analytic[i]
            );
        }
    }
}

/// Reduce any tensor to a scalar through a fixed random projection so every
/// output element contributes a distinct weight.
fn project(tape: &mut Tape, x: Var, seed: u64) -> unic_tensor::Result<Var> {
    let shape = tape.value(x).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = tape.constant(uniform(&mut rng, &shape))?;
    let p = tape.mul(x, w)?;
    tape.sum(p)
}

fn trials(name: &str, mut make: impl FnMut(&mut ChaCha8Rng) -> (Vec<Tensor>, Box<Build>)) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ name.len() as u64);
    for _ in 0..TRIALS {
        let (inputs, build) = make(&mut rng);
        check(name, &inputs, build.as_ref());
    }
}

#[test]
fn add_sub_and_mul() {
    trials("add", |rng| {
        let s = [2, 3];
        (
            vec![uniform(rng, &s), uniform(rng, &s)],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.add(v[0], v[1])?;
                project(t, y, 1)
            }),
        )
    });
    trials("sub", |rng| {
        let s = [2, 3];
        (
            vec![uniform(rng, &s), uniform(rng, &s)],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.sub(v[0], v[1])?;
                project(t, y, 10)
            }),
        )
    });
    trials("mul", |rng| {
        let s = [3, 2];
        (
            vec![uniform(rng, &s), uniform(rng, &s)],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.mul(v[0], v[1])?;
                project(t, y, 2)
            }),
        )
    });
}

#[test]
fn matmul() {
    trials("matmul", |rng| {
        (
            vec![uniform(rng, &[2, 3]), uniform(rng, &[3, 4])],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.matmul(v[0], v[1])?;
                project(t, y, 3)
            }),
        )
    });
}

#[test]
fn conv2d_strided_and_padded() {
    let mut k = 0usize;
    trials("conv2d", |rng| {
        let (stride, padding) = [(1, 1), (2, 1), (1, 0), (2, 0)][k % 4];
        k += 1;
        (
            vec![uniform(rng, &[2, 2, 5, 5]), uniform(rng, &[3, 2, 3, 3])],
            Box::new(move |t: &mut Tape, v: &[Var]| {
                let y = t.conv2d(v[0], v[1], stride, padding)?;
                project(t, y, 4)
            }),
        )
    });
}

#[test]
fn conv_transpose2d() {
    let mut k = 0usize;
    trials("conv_transpose2d", |rng| {
        let (ks, stride, padding) = [(2, 2, 0), (3, 2, 1), (3, 1, 1)][k % 3];
        k += 1;
        (
            vec![uniform(rng, &[2, 2, 3, 3]), uniform(rng, &[2, 3, ks, ks])],
            Box::new(move |t: &mut Tape, v: &[Var]| {
                let y = t.conv_transpose2d(v[0], v[1], stride, padding)?;
                project(t, y, 5)
            }),
        )
    });
}

#[test]
fn silu_and_log_sigmoid() {
    trials("silu", |rng| {
        (
            vec![uniform(rng, &[7])],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.silu(v[0])?;
                project(t, y, 6)
            }),
        )
    });
    trials("log_sigmoid", |rng| {
        (
            vec![uniform(rng, &[7])],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.log_sigmoid(v[0])?;
                project(t, y, 7)
            }),
        )
    });
}

#[test]
fn pooling_channels_and_reshape() {
    trials("avg_pool2d", |rng| {
        (
            vec![uniform(rng, &[1, 2, 4, 4])],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.avg_pool2d(v[0], 2)?;
                project(t, y, 8)
            }),
        )
    });
    trials("add_channel", |rng| {
        (
            vec![uniform(rng, &[2, 3, 2, 2]), uniform(rng, &[2, 3]), uniform(rng, &[3])],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.add_channel(v[0], v[1])?;
                let y = t.add_channel(y, v[2])?;
                let y = t.reshape(y, &[2, 12])?;
                project(t, y, 9)
            }),
        )
    });
}

#[test]
fn linear_mse_and_scalar_reductions() {
    trials("linear+mse", |rng| {
        (
            vec![
                uniform(rng, &[4, 3]),
                uniform(rng, &[2, 3]),
                uniform(rng, &[2]),
                uniform(rng, &[4, 2]),
            ],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.linear(v[0], v[1], v[2])?;
                t.mse(y, v[3])
            }),
        )
    });
    trials("mean+scale", |rng| {
        (
            vec![uniform(rng, &[5])],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.mul(v[0], v[0])?;
                let y = t.scale(y, -0.7)?;
                t.mean(y)
            }),
        )
    });
}
