//! Every tape primitive against central differences, plus algebraic
//! properties of the tape.

use metacritic_core::autodiff::{finite_diff_grad, max_relative_error, ParamSet, Tape, Tensor, Var};
use metacritic_core::rng::{stream, Rng};
use metacritic_core::Result;
use proptest::prelude::*;
use rand::Rng as _;

const H: f64 = 1e-6;
const TOL: f64 = 1e-4;

type Primitive = fn(&mut Tape, Var, Var) -> Result<Var>;

fn primitives() -> Vec<(&'static str, Primitive)> {
    vec![
        ("matmul", |t, a, b| {
            let bt = t.slice(b, 0, 3)?;
            let bt = t.gather_rows(bt, &[0, 1, 0])?;
            t.matmul(a, bt)
        }),
        ("add", |t, a, b| t.add(a, b)),
        ("sub", |t, a, b| t.sub(a, b)),
        ("mul", |t, a, b| t.mul(a, b)),
        ("add_bias", |t, a, b| {
            let row = t.gather_rows(b, &[1])?;
            t.add_bias(a, row)
        }),
        ("relu", |t, a, _| t.relu(a)),
        ("tanh", |t, a, _| t.tanh(a)),
        ("sigmoid", |t, a, _| t.sigmoid(a)),
        ("softmax", |t, a, _| t.softmax(a)),
        ("concat", |t, a, b| t.concat(&[a, b])),
        ("slice", |t, a, _| t.slice(a, 1, 2)),
        ("repeat_rows", |t, a, _| {
            let row = t.gather_rows(a, &[0])?;
            t.repeat_rows(row, 3)
        }),
        ("stack_rows", |t, a, b| t.stack_rows(&[a, b, a])),
        ("gather_rows", |t, a, _| t.gather_rows(a, &[1, 1, 0])),
        ("sum", |t, a, _| t.sum(a)),
        ("mean", |t, a, _| t.mean(a)),
        ("square", |t, a, _| t.square(a)),
        ("neg", |t, a, _| t.neg(a)),
        ("scale", |t, a, _| t.scale(a, -2.5)),
        ("cross_entropy", |t, a, _| {
            let target = Tensor::matrix(2, 3, vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0])?;
            t.cross_entropy(a, &target)
        }),
    ]
}

fn random_params(rng: &mut Rng) -> ParamSet {
    let mut p = ParamSet::new();
    for name in ["a", "b"] {
        let v = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        p.insert(name, Tensor::matrix(2, 3, v).unwrap()).unwrap();
    }
    p
}

/// `sum(op(a, b) * w)` for a fixed weight tensor shaped like the output.
fn probed(params: &ParamSet, op: Primitive, weights: &mut Option<Tensor>, rng: &mut Rng) -> Result<(Tape, Var, Vec<Var>)> {
    let mut tape = Tape::new();
    let b = params.bind(&mut tape);
    let out = op(&mut tape, b.var(0), b.var(1))?;
    let w = weights.get_or_insert_with(|| {
        let shape = tape.value(out).shape().to_vec();
        let n = tape.value(out).len();
        Tensor::new(&shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    });
    let wv = tape.constant(w.clone());
    let prod = tape.mul(out, wv)?;
    let loss = tape.sum(prod)?;
    Ok((tape, loss, b.vars().to_vec()))
}

#[test]
fn every_primitive_matches_finite_differences_on_100_seeds() {
    for (name, op) in primitives() {
        let mut worst: f64 = 0.0;
        for seed in 0..100u64 {
            let mut rng = stream(seed, &[0xad]);
            let mut params = random_params(&mut rng);
            let mut w = None;
            let (tape, loss, vars) = probed(&params, op, &mut w, &mut rng).unwrap();
            let g = tape.backward(loss).unwrap();
            let analytic: Vec<Tensor> = vars
                .iter()
                .zip(params.iter())
                .map(|(&v, p)| g.get(v).cloned().unwrap_or_else(|| Tensor::zeros(p.value.shape())))
                .collect();
            let numeric = finite_diff_grad(
                |p| {
                    let (tape, loss, _) = probed(p, op, &mut w.clone(), &mut stream(0, &[]))?;
                    tape.value(loss).item()
                },
                &mut params,
                H,
            )
            .unwrap();
            worst = worst.max(max_relative_error(&analytic, &numeric, TOL));
        }
        assert!(worst < TOL, "{name}: max relative error {worst:e}");
    }
}

#[test]
fn detach_blocks_the_gradient_path() {
    let mut rng = stream(3, &[]);
    let params = random_params(&mut rng);
    let mut tape = Tape::new();
    let b = params.bind(&mut tape);
    let d = tape.detach(b.var(0));
    let prod = tape.mul(d, b.var(1)).unwrap();
    let loss = tape.sum(prod).unwrap();
    let g = tape.backward(loss).unwrap();
    assert!(g.get(b.var(0)).is_none_or(|t| t.data().iter().all(|&v| v == 0.0)));
    assert_eq!(g.get(b.var(1)).unwrap(), params.value(0));
}

fn tensor_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |v| Tensor::matrix(rows, cols, v).unwrap())
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(x in tensor_strategy(4, 5)) {
        let s = x.softmax();
        for r in 0..4 {
            let row = s.row(r);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn backward_is_linear(x in tensor_strategy(3, 4), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let grad = |ka: f64, kb: f64| {
            let mut tape = Tape::new();
            let v = tape.variable(x.clone());
            let t = tape.tanh(v).unwrap();
            let f = tape.sum(t).unwrap();
            let sq = tape.square(v).unwrap();
            let g = tape.mean(sq).unwrap();
            let fa = tape.scale(f, ka).unwrap();
            let gb = tape.scale(g, kb).unwrap();
            let root = tape.add(fa, gb).unwrap();
            tape.backward(root).unwrap().get(v).unwrap().clone()
        };
        let combined = grad(a, b);
        let separate = grad(1.0, 0.0).scale(a).add(&grad(0.0, 1.0).scale(b)).unwrap();
        for (c, s) in combined.data().iter().zip(separate.data()) {
            prop_assert!((c - s).abs() <= 1e-12 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn replaying_a_tape_is_bitwise_identical(x in tensor_strategy(2, 3), w in tensor_strategy(3, 2)) {
        let run = || {
            let mut tape = Tape::new();
            let xv = tape.variable(x.clone());
            let wv = tape.variable(w.clone());
            let h = tape.matmul(xv, wv).unwrap();
            let h = tape.sigmoid(h).unwrap();
            let l = tape.sum(h).unwrap();
            let g = tape.backward(l).unwrap();
            (tape.value(l).clone(), g.get(xv).unwrap().clone(), g.get(wv).unwrap().clone())
        };
        let (l1, gx1, gw1) = run();
        let (l2, gx2, gw2) = run();
        prop_assert_eq!(l1.data()[0].to_bits(), l2.data()[0].to_bits());
        prop_assert!(gx1.data().iter().zip(gx2.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert!(gw1.data().iter().zip(gw2.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
