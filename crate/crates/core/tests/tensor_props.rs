//! Property tests for structural tensor invariants.

use murk_core::tensor::{PadMode, Tape, Tensor};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reshape_roundtrip_is_identity(
        data in prop::collection::vec(-1e3f32..1e3, 12..=12),
        split in 1usize..=4,
    ) {
        let divisors = [1usize, 2, 3, 4, 6, 12];
        let r = divisors[split % divisors.len()];
        let mut tape: Tape<f32> = Tape::new();
        let x = tape.leaf(Tensor::new(vec![12], data.clone()).unwrap());
        let a = tape.reshape(x, vec![r, 12 / r]).unwrap();
        let b = tape.reshape(a, vec![12]).unwrap();
        prop_assert_eq!(tape.value(b).data(), data.as_slice());
    }

    #[test]
    fn softmax_rows_sum_to_one_at_large_magnitudes(
        rows in 1usize..4,
        data in prop::collection::vec(-1e4f32..1e4, 3..=24),
    ) {
        let cols = data.len() / rows;
        prop_assume!(cols >= 1);
        let data = &data[..rows * cols];
        let mut tape: Tape<f32> = Tape::new();
        let x = tape.leaf(Tensor::new(vec![rows, cols], data.to_vec()).unwrap());
        let y = tape.softmax(x).unwrap();
        let out = tape.value(y).data();
        for r in 0..rows {
            let sum: f32 = out[r * cols..(r + 1) * cols].iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6, "row {} sums to {}", r, sum);
            prop_assert!(out[r * cols..(r + 1) * cols].iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn patch_flatten_unflatten_is_bitwise_inverse(
        c in 1usize..3,
        grid in 1usize..4,
        p in 1usize..3,
        seed in 0u64..1000,
    ) {
        let (h, w) = (grid * p, grid * p);
        let mut rng = murk_core::rng::rng_from_seed(seed);
        use rand::Rng as _;
        let data: Vec<f32> = (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut tape: Tape<f32> = Tape::new();
        let x = tape.leaf(Tensor::new(vec![c, h, w], data.clone()).unwrap());
        let seq = tape.patch_flatten(x, p).unwrap();
        let back = tape.patch_unflatten(seq, c, grid, grid, p).unwrap();
        prop_assert_eq!(tape.value(back).data(), data.as_slice());
    }

    #[test]
    fn pad_then_crop_restores_exactly(
        h in 2usize..7,
        w in 2usize..7,
        right in 0usize..4,
        bottom in 0usize..4,
        zero_mode in any::<bool>(),
    ) {
        let data: Vec<f32> = (0..2 * h * w).map(|i| i as f32 * 0.37 - 3.0).collect();
        let mode = if zero_mode { PadMode::Zero } else { PadMode::Reflect };
        let mut tape: Tape<f32> = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2, h, w], data.clone()).unwrap());
        let padded = tape.pad2d(x, 0, right, 0, bottom, mode).unwrap();
        let cropped = tape.crop2d(padded, h, w).unwrap();
        prop_assert_eq!(tape.value(cropped).data(), data.as_slice());
    }
}

#[test]
fn matmul_frozen_examples() {
    let mut tape: Tape<f32> = Tape::new();
    let a = tape.leaf(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let b = tape.leaf(Tensor::new(vec![2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap());
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(c).data(), &[19.0, 22.0, 43.0, 50.0]);

    // identity(3) × M = M
    let eye = tape.leaf(Tensor::new(vec![3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap());
    let m = tape.leaf(Tensor::new(vec![3, 3], (0..9).map(|i| i as f32 * 1.5).collect()).unwrap());
    let prod = tape.matmul(eye, m).unwrap();
    assert_eq!(tape.value(prod).data(), tape.value(m).data());

    // Shape mismatch names both shapes.
    let bad = tape.leaf(Tensor::new(vec![3, 2], vec![0.0; 6]).unwrap());
    let err = tape.matmul(a, bad).unwrap_err().to_string();
    assert!(err.contains("[2, 2]") && err.contains("[3, 2]"), "diagnostic: {err}");
}

#[test]
fn elementwise_and_reduction_examples() {
    let mut tape: Tape<f32> = Tape::new();
    let zeros = tape.leaf(Tensor::zeros(vec![4]));
    let ones = tape.leaf(Tensor::full(vec![4], 1.0));
    let l = tape.l1_loss(zeros, ones).unwrap();
    assert_eq!(tape.value(l).item(), 1.0);
    let l0 = tape.l1_loss(ones, ones).unwrap();
    assert_eq!(tape.value(l0).item(), 0.0);

    let x = tape.leaf(Tensor::new(vec![2], vec![-2.0, 3.0]).unwrap());
    let r = tape.relu(x);
    assert_eq!(tape.value(r).data(), &[0.0, 3.0]);

    // softmax trivial cases
    let s = tape.leaf(Tensor::new(vec![3], vec![0.0, 0.0, 0.0]).unwrap());
    let sm = tape.softmax(s).unwrap();
    for &v in tape.value(sm).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-7);
    }
    let big = tape.leaf(Tensor::new(vec![2], vec![1000.0, 0.0]).unwrap());
    let smb = tape.softmax(big).unwrap();
    assert!(tape.value(smb).data()[0] > 0.9999);
    assert!(tape.value(smb).data().iter().all(|v| v.is_finite()));
}

#[test]
fn layernorm_hand_example() {
    // token [1,3], gain 1, shift 0 -> [-1, 1] within 1e-3 ((x-2)/sqrt(1+eps))
    let mut tape: Tape<f32> = Tape::new();
    let x = tape.leaf(Tensor::new(vec![1, 2], vec![1.0, 3.0]).unwrap());
    let g = tape.leaf(Tensor::full(vec![2], 1.0));
    let s = tape.leaf(Tensor::zeros(vec![2]));
    let y = tape.layernorm(x, g, s, 1e-5).unwrap();
    let out = tape.value(y).data();
    assert!((out[0] + 1.0).abs() < 1e-3);
    assert!((out[1] - 1.0).abs() < 1e-3);

    // Constant token: zero variance resolved by eps -> zeros.
    let c = tape.leaf(Tensor::full(vec![1, 4], 5.0));
    let g4 = tape.leaf(Tensor::full(vec![4], 1.0));
    let s4 = tape.leaf(Tensor::zeros(vec![4]));
    let yc = tape.layernorm(c, g4, s4, 1e-5).unwrap();
    assert!(tape.value(yc).data().iter().all(|&v| v == 0.0));
}

#[test]
fn backward_hand_examples() {
    // loss = sum(x), grad = ones
    let mut tape: Tape<f32> = Tape::new();
    let x = tape.leaf(Tensor::new(vec![3], vec![5.0, -2.0, 0.5]).unwrap().with_requires_grad());
    let loss = tape.sum(x);
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 1.0]);

    // loss = sum(x*x) at x=[1,2] -> grad [2,4]
    let mut tape: Tape<f32> = Tape::new();
    let x = tape.leaf(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap().with_requires_grad());
    let sq = tape.mul(x, x).unwrap();
    let loss = tape.sum(sq);
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[2.0, 4.0]);

    // Non-scalar loss is a contract error.
    let mut tape: Tape<f32> = Tape::new();
    let x = tape.leaf(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap().with_requires_grad());
    assert!(tape.backward(x).is_err());
}

#[test]
fn conv_frozen_examples() {
    // 1x1 kernel, weight 1, bias 0 -> identity.
    let mut tape: Tape<f32> = Tape::new();
    let x = tape.leaf(Tensor::new(vec![1, 3, 3], (0..9).map(|i| i as f32).collect()).unwrap());
    let w = tape.leaf(Tensor::full(vec![1, 1, 1, 1], 1.0));
    let b = tape.leaf(Tensor::zeros(vec![1]));
    let y = tape.conv2d(x, w, b, 1, 0, PadMode::Zero).unwrap();
    assert_eq!(tape.value(y).data(), tape.value(x).data());

    // 3x3 ones kernel on 3x3 ones image, zero padding: center = 9.
    let ones = tape.leaf(Tensor::full(vec![1, 3, 3], 1.0));
    let w3 = tape.leaf(Tensor::full(vec![1, 1, 3, 3], 1.0));
    let y3 = tape.conv2d(ones, w3, b, 1, 1, PadMode::Zero).unwrap();
    assert_eq!(tape.value(y3).data()[4], 9.0);
    assert_eq!(tape.value(y3).data()[0], 4.0); // corner under zero padding

    // Kernel larger than padded input is a dimension error.
    let tiny = tape.leaf(Tensor::full(vec![1, 2, 2], 1.0));
    assert!(tape.conv2d(tiny, w3, b, 1, 0, PadMode::Zero).is_err());
}
