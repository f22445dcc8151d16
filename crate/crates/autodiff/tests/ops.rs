use std::sync::Arc;

use picrnn_autodiff::gradcheck::{central_differences, relative_error};
use picrnn_autodiff::{pixel_shuffle_values, pixel_unshuffle_values, Error, LinearOperator, Tape, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Reduces an arbitrary output to a scalar with fixed random weights so the
/// check exercises the full vector-Jacobian product, not just its sum.
fn weighted_sum(tape: &mut Tape, out: Var, seed: u64) -> Var {
    let w = random(tape.shape(out), seed);
    let w = tape.constant(w);
    let prod = tape.mul(out, w).unwrap();
    tape.sum(prod)
}

/// Checks analytic gradients of every input against central differences.
fn check_op(inputs: &[Tensor], build: impl Fn(&mut Tape, &[Var]) -> Var, tol: f64) {
    let eval = |values: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let out = build(&mut tape, &vars);
        let loss = weighted_sum(&mut tape, out, 99);
        tape.value(loss).item()
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = build(&mut tape, &vars);
    let loss = weighted_sum(&mut tape, out, 99);
    let grads = tape.backward(loss).unwrap();

    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]).expect("gradient missing");
        assert_eq!(analytic.shape(), input.shape());
        let idx: Vec<usize> = (0..input.len()).collect();
        let numeric = central_differences(
            |x| {
                let mut vals = inputs.to_vec();
                vals[k] = Tensor::new(input.shape().to_vec(), x.to_vec()).unwrap();
                eval(&vals)
            },
            input.data(),
            &idx,
            1e-6,
        );
        // differences below eps·|L|/h are roundoff, not gradient error
        let floor = 1e-3 * numeric.iter().fold(1e-6f64, |m, v| m.max(v.abs()));
        for (i, (a, n)) in analytic.data().iter().zip(&numeric).enumerate() {
            let err = relative_error(*a, *n, floor);
            assert!(err < tol, "input {k} element {i}: analytic {a} numeric {n} (rel {err})");
        }
    }
}

/// Direct six-nested-loop cross-correlation.
fn naive_conv(x: &Tensor, w: &Tensor, b: &[f64], stride: usize, pad: usize) -> Tensor {
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (o, _, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * o * oh * ow];
    for bn in 0..n {
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[oc];
                    for ic in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                    acc += x.data()[((bn * c + ic) * h + iy as usize) * wd + ix as usize]
                                        * w.data()[((oc * c + ic) * kh + ky) * kw + kx];
                                }
                            }
                        }
                    }
                    out[((bn * o + oc) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    Tensor::new(vec![n, o, oh, ow], out).unwrap()
}

#[test]
fn conv2d_matches_naive_loops() {
    // every (channels, kernel, stride, padding) combination the surrogate uses
    let cases = [
        (1, 2, 5, 5, 3, 3, 1, 1),
        (1, 2, 5, 5, 3, 3, 1, 0),
        (2, 1, 16, 16, 16, 4, 2, 1),
        (1, 16, 8, 8, 32, 4, 2, 1),
        (1, 32, 4, 4, 64, 4, 2, 1),
        (1, 64, 2, 2, 64, 5, 1, 2),
        (1, 64, 2, 2, 64, 3, 1, 1),
        (1, 64, 4, 4, 32, 3, 1, 1),
        (1, 16, 16, 16, 1, 1, 1, 0),
    ];
    for (seed, &(n, c, h, w, o, k, s, p)) in cases.iter().enumerate() {
        let x = random(&[n, c, h, w], seed as u64);
        let wt = random(&[o, c, k, k], 100 + seed as u64);
        let b = random(&[o], 200 + seed as u64);
        let mut tape = Tape::new();
        let (xv, wv, bv) = (tape.constant(x.clone()), tape.constant(wt.clone()), tape.constant(b.clone()));
        let y = tape.conv2d(xv, wv, Some(bv), s, p).unwrap();
        let oracle = naive_conv(&x, &wt, b.data(), s, p);
        assert_eq!(tape.shape(y), oracle.shape());
        for (a, e) in tape.value(y).data().iter().zip(oracle.data()) {
            assert!((a - e).abs() <= 1e-12, "{a} vs {e}");
        }
    }
}

#[test]
fn conv2d_model_shapes() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(&[1, 1, 64, 64]));
    let w = tape.constant(Tensor::zeros(&[16, 1, 4, 4]));
    let b = tape.constant(Tensor::zeros(&[16]));
    let y = tape.conv2d(x, w, Some(b), 2, 1).unwrap();
    assert_eq!(tape.shape(y), &[1, 16, 32, 32]);
}

#[test]
fn conv2d_identity_kernel() {
    let x = random(&[1, 1, 6, 5], 3);
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let w = tape.constant(Tensor::full(&[1, 1, 1, 1], 1.0));
    let b = tape.constant(Tensor::zeros(&[1]));
    let y = tape.conv2d(xv, w, Some(b), 1, 0).unwrap();
    assert_eq!(tape.value(y), &x);
}

#[test]
fn conv2d_shape_errors() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(&[1, 2, 5, 5]));
    let w = tape.constant(Tensor::zeros(&[3, 1, 3, 3]));
    assert!(matches!(tape.conv2d(x, w, None, 1, 1), Err(Error::Shape { .. })));
    let w = tape.constant(Tensor::zeros(&[3, 2, 7, 7]));
    assert!(tape.conv2d(x, w, None, 1, 0).is_err());
    let w = tape.constant(Tensor::zeros(&[3, 2, 3, 3]));
    let b = tape.constant(Tensor::zeros(&[2]));
    assert!(tape.conv2d(x, w, Some(b), 1, 1).is_err());
}

#[test]
fn conv2d_gradients() {
    for &(s, p, k) in &[(1, 1, 3), (2, 1, 4), (1, 2, 5), (1, 0, 1)] {
        check_op(
            &[random(&[2, 2, 6, 6], 1), random(&[3, 2, k, k], 2), random(&[3], 3)],
            |t, v| t.conv2d(v[0], v[1], Some(v[2]), s, p).unwrap(),
            1e-6,
        );
    }
    check_op(&[random(&[1, 3, 4, 4], 4), random(&[2, 3, 3, 3], 5)], |t, v| t.conv2d(v[0], v[1], None, 1, 1).unwrap(), 1e-6);
}

#[test]
fn weight_norm_identities() {
    let v = random(&[4, 2, 3, 3], 11);
    let norms: Vec<f64> = v.data().chunks(18).map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut tape = Tape::new();
    let vv = tape.constant(v.clone());
    let g = tape.constant(Tensor::from_vec(norms));
    let w = tape.weight_norm(vv, g).unwrap();
    for (a, b) in tape.value(w).data().iter().zip(v.data()) {
        assert!((a - b).abs() < 1e-15);
    }

    let scaled = Tensor::new(v.shape().to_vec(), v.data().iter().map(|x| 3.7 * x).collect()).unwrap();
    let sv = tape.constant(scaled);
    let w2 = tape.weight_norm(sv, g).unwrap();
    for (a, b) in tape.value(w2).data().iter().zip(tape.value(w).data()) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn weight_norm_errors_and_gradients() {
    let mut tape = Tape::new();
    let mut data = random(&[3, 2, 2, 2], 1).into_data();
    data[8..16].fill(0.0);
    let v = tape.constant(Tensor::new(vec![3, 2, 2, 2], data).unwrap());
    let g = tape.constant(Tensor::from_vec(vec![1.0; 3]));
    assert_eq!(tape.weight_norm(v, g), Err(Error::DegenerateFilter(1)));
    let g2 = tape.constant(Tensor::from_vec(vec![1.0; 2]));
    assert!(tape.weight_norm(v, g2).is_err());

    check_op(&[random(&[4, 2, 3, 3], 21), random(&[4], 22)], |t, v| t.weight_norm(v[0], v[1]).unwrap(), 1e-6);
}

#[test]
fn pixel_unshuffle_shapes_and_errors() {
    let mut tape = Tape::new();
    let x = tape.constant(random(&[1, 1, 64, 64], 1));
    let y = tape.pixel_unshuffle(x, 8).unwrap();
    assert_eq!(tape.shape(y), &[1, 64, 8, 8]);
    let same = tape.pixel_unshuffle(x, 1).unwrap();
    assert_eq!(tape.value(same), tape.value(x));
    let odd = tape.constant(Tensor::zeros(&[1, 1, 12, 12]));
    assert!(tape.pixel_unshuffle(odd, 8).is_err());
    let back = tape.pixel_shuffle(y, 8).unwrap();
    assert_eq!(tape.value(back), tape.value(x));
}

#[test]
fn pixel_unshuffle_layout() {
    // 4x4 single channel, r = 2: channel a*2+b collects pixels (2y+a, 2x+b)
    let x: Vec<f64> = (0..16).map(f64::from).collect();
    let y = pixel_unshuffle_values(&x, (1, 1, 4, 4), 2);
    assert_eq!(&y[0..4], &[0.0, 2.0, 8.0, 10.0]);
    assert_eq!(&y[4..8], &[1.0, 3.0, 9.0, 11.0]);
    assert_eq!(&y[8..12], &[4.0, 6.0, 12.0, 14.0]);
}

#[test]
fn shuffle_gradients() {
    check_op(&[random(&[1, 2, 4, 4], 31)], |t, v| t.pixel_unshuffle(v[0], 2).unwrap(), 1e-6);
    check_op(&[random(&[1, 8, 2, 3], 32)], |t, v| t.pixel_shuffle(v[0], 2).unwrap(), 1e-6);
}

#[test]
fn upsample_shapes_and_gradient() {
    let mut tape = Tape::new();
    let x = tape.param(random(&[1, 64, 8, 8], 1));
    let y = tape.upsample_nearest(x, 2).unwrap();
    assert_eq!(tape.shape(y), &[1, 64, 16, 16]);
    let s = tape.sum(y);
    let g = tape.backward(s).unwrap();
    assert!(g.get(x).unwrap().data().iter().all(|&v| v == 4.0));

    let one = tape.upsample_nearest(x, 1).unwrap();
    assert_eq!(tape.value(one), tape.value(x));
    assert!(tape.upsample_nearest(x, 0).is_err());

    check_op(&[random(&[1, 2, 3, 2], 41)], |t, v| t.upsample_nearest(v[0], 3).unwrap(), 1e-6);
}

#[test]
fn pointwise_values() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::from_vec(vec![0.0, 0.7, -0.7]));
    let s = tape.sigmoid(x);
    assert_eq!(tape.value(s).data()[0], 0.5);
    let t = tape.tanh(x);
    let td = tape.value(t).data();
    assert_eq!(td[0], 0.0);
    assert_eq!(td[1], -td[2]);
    let a = tape.affine(x, 2.0, 1.0);
    assert_eq!(tape.value(a).data(), &[1.0, 2.4, -0.3999999999999999]);
    let short = tape.constant(Tensor::from_vec(vec![1.0, 2.0]));
    assert!(tape.add(x, short).is_err());
    assert!(tape.mul(x, short).is_err());
}

#[test]
fn pointwise_gradients() {
    let a = random(&[2, 3, 2, 2], 51);
    let b = random(&[2, 3, 2, 2], 52);
    check_op(&[a.clone()], |t, v| t.sigmoid(v[0]), 1e-6);
    check_op(&[a.clone()], |t, v| t.tanh(v[0]), 1e-6);
    check_op(&[a.clone()], |t, v| t.affine(v[0], -1.7, 0.3), 1e-6);
    check_op(&[a.clone(), b.clone()], |t, v| t.add(v[0], v[1]).unwrap(), 1e-6);
    check_op(&[a.clone(), b.clone()], |t, v| t.sub(v[0], v[1]).unwrap(), 1e-6);
    check_op(&[a.clone(), b.clone()], |t, v| t.mul(v[0], v[1]).unwrap(), 1e-6);
    let scale: Arc<[f64]> = random(&[24], 53).into_data().into();
    let shift = random(&[24], 54).into_data();
    check_op(&[a], move |t, v| t.scale_shift(v[0], scale.clone(), Some(&shift)).unwrap(), 1e-6);
}

#[test]
fn hadamard_gradient_is_other_operand() {
    let (a, b) = (random(&[5], 61), random(&[5], 62));
    let mut tape = Tape::new();
    let (av, bv) = (tape.param(a.clone()), tape.param(b.clone()));
    let p = tape.mul(av, bv).unwrap();
    let s = tape.sum(p);
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(av).unwrap().data(), b.data());
    assert_eq!(g.get(bv).unwrap().data(), a.data());
}

struct Dense(Vec<Vec<f64>>);

impl LinearOperator for Dense {
    fn rows(&self) -> usize {
        self.0.len()
    }
    fn cols(&self) -> usize {
        self.0[0].len()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.0.iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }
    fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        (0..self.cols()).map(|c| self.0.iter().zip(y).map(|(r, yi)| r[c] * yi).sum()).collect()
    }
}

#[test]
fn linear_operator_gradient() {
    let m = Dense((0..3).map(|i| (0..4).map(|j| (i * 4 + j) as f64 * 0.1 - 0.5).collect()).collect());
    let op: Arc<dyn LinearOperator> = Arc::new(m);
    check_op(&[random(&[4], 71)], move |t, v| t.linear(v[0], op.clone()).unwrap(), 1e-6);
}

#[test]
fn smooth_l1_values() {
    let mut tape = Tape::new();
    let zero = tape.constant(Tensor::from_vec(vec![0.0]));
    for (d, expected) in [(10.0, 1.0), (100.0, 75.0), (0.0, 0.0), (-100.0, 75.0)] {
        let p = tape.constant(Tensor::from_vec(vec![d]));
        let l = tape.smooth_l1(p, zero, 50.0).unwrap();
        assert_eq!(tape.value(l).item(), expected);
    }
    let p = tape.constant(Tensor::from_vec(vec![10.0, 100.0]));
    let z = tape.constant(Tensor::zeros(&[2]));
    let l = tape.smooth_l1(p, z, 50.0).unwrap();
    assert_eq!(tape.value(l).item(), 38.0);
    assert!(tape.smooth_l1(p, z, 0.0).is_err());
    assert!(tape.smooth_l1(p, zero, 1.0).is_err());
}

#[test]
fn smooth_l1_gradient() {
    // keep |d| away from beta where the second derivative jumps
    let pred = Tensor::from_vec(vec![0.2, -0.4, 2.5, -3.0, 0.05]);
    let target = Tensor::from_vec(vec![0.0, 0.1, 0.3, 0.0, -0.6]);
    check_op(&[pred, target], |t, v| t.smooth_l1(v[0], v[1], 1.0).unwrap(), 1e-6);
}

#[test]
fn backward_simple_losses() {
    let mut tape = Tape::new();
    let theta = tape.param(Tensor::from_vec(vec![1.0, 2.0]));
    let s = tape.sum(theta);
    assert_eq!(tape.backward(s).unwrap().get(theta).unwrap().data(), &[1.0, 1.0]);
    let sq = tape.mul(theta, theta).unwrap();
    let l = tape.sum(sq);
    assert_eq!(tape.backward(l).unwrap().get(theta).unwrap().data(), &[2.0, 4.0]);
}

#[test]
fn backward_rejects_non_scalar_and_handles_detached() {
    let mut tape = Tape::new();
    let theta = tape.param(Tensor::from_vec(vec![1.0, 2.0]));
    assert_eq!(tape.backward(theta).unwrap_err(), Error::NonScalarRoot(vec![2]));
    let c = tape.constant(Tensor::from_vec(vec![3.0]));
    let s = tape.sum(c);
    let g = tape.backward(s).unwrap();
    assert!(g.is_empty());
    assert!(g.get(theta).is_none());
}

#[test]
fn gradients_accumulate_over_reuse() {
    // y = sum(tanh(w ⊙ x)) applied three times with the same w
    let mut tape = Tape::new();
    let w = tape.param(Tensor::from_vec(vec![0.3, -0.2]));
    let mut x = tape.constant(Tensor::from_vec(vec![1.0, 1.0]));
    for _ in 0..3 {
        let p = tape.mul(w, x).unwrap();
        x = tape.tanh(p);
    }
    let l = tape.sum(x);
    let g1 = tape.backward(l).unwrap();
    let g2 = tape.backward(l).unwrap();
    assert_eq!(g1.get(w), g2.get(w));

    let numeric = central_differences(
        |wv| {
            let mut x = [1.0f64, 1.0];
            for _ in 0..3 {
                x = [(wv[0] * x[0]).tanh(), (wv[1] * x[1]).tanh()];
            }
            x[0] + x[1]
        },
        &[0.3, -0.2],
        &[0, 1],
        1e-6,
    );
    for (a, n) in g1.get(w).unwrap().data().iter().zip(numeric) {
        assert!(relative_error(*a, n, 1e-8) < 1e-7);
    }
}

proptest! {
    #[test]
    fn shuffle_is_a_bijection(c in 1usize..3, hb in 1usize..4, wb in 1usize..4, r in 1usize..4, seed in 0u64..1000) {
        let dims = (1, c, hb * r, wb * r);
        let x = random(&[1, c, hb * r, wb * r], seed);
        let down = pixel_unshuffle_values(x.data(), dims, r);
        let mut sorted_a = down.clone();
        let mut sorted_b = x.data().to_vec();
        sorted_a.sort_by(f64::total_cmp);
        sorted_b.sort_by(f64::total_cmp);
        prop_assert_eq!(sorted_a, sorted_b);
        let back = pixel_shuffle_values(&down, (1, c * r * r, hb, wb), r);
        prop_assert_eq!(back, x.data().to_vec());
    }
}
