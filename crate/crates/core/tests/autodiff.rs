use orthodepth_core::autodiff::{Tape, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn leaf(tape: &mut Tape<f64>, shape: &[usize], data: Vec<f64>) -> orthodepth_core::Var {
    tape.leaf(Tensor::new(shape, data).unwrap().with_grad())
}

#[test]
fn layer_norm_known_row() {
    let mut tape = Tape::new();
    let x = leaf(&mut tape, &[1, 3], vec![1.0, 2.0, 3.0]);
    let g = leaf(&mut tape, &[3], vec![1.0; 3]);
    let b = leaf(&mut tape, &[3], vec![0.0; 3]);
    let y = tape.layer_norm(x, g, b, 0.0).unwrap();
    let want = [-1.5f64.sqrt(), 0.0, 1.5f64.sqrt()];
    for (a, w) in tape.data(y).iter().zip(want) {
        assert!((a - w).abs() < 1e-12, "{a} vs {w}");
    }
}

#[test]
fn layer_norm_applies_gain_and_shift() {
    let mut tape = Tape::new();
    let x = leaf(&mut tape, &[2, 2], vec![0.0, 2.0, 5.0, 5.0]);
    let g = leaf(&mut tape, &[2], vec![2.0, 3.0]);
    let b = leaf(&mut tape, &[2], vec![0.5, -0.5]);
    let y = tape.layer_norm(x, g, b, 1e-5).unwrap();
    let d = tape.data(y);
    assert!((d[0] - (-2.0 + 0.5)).abs() < 1e-4);
    assert!((d[1] - (3.0 - 0.5)).abs() < 1e-4);
    // a constant row normalizes to zero, leaving only the shift
    assert_eq!(&d[2..], &[0.5, -0.5]);
}

#[test]
fn uniform_logits_give_log_vocab_loss() {
    let mut tape = Tape::new();
    let logits = leaf(&mut tape, &[3, 25], vec![0.0; 75]);
    let loss = tape.softmax_cross_entropy(logits, &[Some(0), None, Some(24)]).unwrap();
    assert!((tape.data(loss)[0] - 25f64.ln()).abs() < 1e-12);
    assert!((25f64.ln() - 3.2189).abs() < 1e-4);
}

#[test]
fn masked_rows_get_no_gradient() {
    let mut tape = Tape::new();
    let logits = leaf(&mut tape, &[2, 3], vec![0.3, -1.0, 2.0, 5.0, 1.0, 0.0]);
    let loss = tape.softmax_cross_entropy(logits, &[Some(1), None]).unwrap();
    tape.backward(loss).unwrap();
    let g = tape.grad(logits).unwrap();
    assert!(g[3..].iter().all(|&v| v == 0.0));
    // softmax minus one-hot, averaged over the single active row
    assert!(g[..3].iter().sum::<f64>().abs() < 1e-12);
    assert!(g[1] < 0.0);
}

#[test]
fn fan_out_accumulates() {
    let mut tape = Tape::new();
    let x = leaf(&mut tape, &[2], vec![1.5, -2.0]);
    let y = tape.add(x, x).unwrap();
    let z = tape.add(y, x).unwrap();
    let s = tape.sum(z).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[3.0, 3.0]);
}

#[test]
fn matmul_gradient_by_hand() {
    let mut tape = Tape::new();
    let a = leaf(&mut tape, &[1, 2], vec![2.0, 3.0]);
    let b = leaf(&mut tape, &[2, 2], vec![1.0, 4.0, -1.0, 0.5]);
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.data(c), &[-1.0, 9.5]);
    let s = tape.sum(c).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(a).unwrap(), &[5.0, -0.5]);
    assert_eq!(tape.grad(b).unwrap(), &[2.0, 2.0, 3.0, 3.0]);
}

#[test]
fn shape_mismatch_is_an_error() {
    let mut tape = Tape::new();
    let a = leaf(&mut tape, &[2, 3], vec![0.0; 6]);
    let b = leaf(&mut tape, &[2, 3], vec![0.0; 6]);
    assert!(tape.matmul(a, b).is_err());
    let c = leaf(&mut tape, &[3], vec![0.0; 3]);
    assert!(tape.add(a, c).is_err());
}

#[test]
fn vars_do_not_cross_tapes() {
    let mut first = Tape::<f64>::new();
    let mut second = Tape::<f64>::new();
    let x = leaf(&mut first, &[1], vec![1.0]);
    let _ = leaf(&mut second, &[1], vec![1.0]);
    assert!(second.sum(x).is_err());
}

#[test]
fn backward_seed_length_is_checked() {
    let mut tape = Tape::new();
    let x = leaf(&mut tape, &[3], vec![1.0, 2.0, 3.0]);
    let y = tape.scale(x, 2.0).unwrap();
    assert!(tape.backward_with(y, &[1.0, 1.0]).is_err());
    tape.backward_with(y, &[1.0, 0.0, -1.0]).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[2.0, 0.0, -2.0]);
}

#[test]
fn backward_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut tape = Tape::<f32>::new();
        let data: Vec<f32> = (0..2 * 4 * 12).map(|i| ((i * 37 % 23) as f32 - 11.0) / 7.0).collect();
        let qkv = tape.leaf(Tensor::new(&[8, 12], data).unwrap().with_grad());
        let att = tape.causal_attention(qkv, 2, 4, 2).unwrap();
        let dropped = tape.dropout(att, 0.25, &mut rng).unwrap();
        let s = tape.sum(dropped).unwrap();
        tape.backward(s).unwrap();
        tape.grad(qkv).unwrap().to_vec()
    };
    let a = run();
    assert_eq!(a, run());
    assert!(a.iter().any(|&g| g != 0.0));
}

#[test]
fn zero_rate_dropout_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut tape = Tape::new();
    let x = leaf(&mut tape, &[4], vec![1.0, 2.0, 3.0, 4.0]);
    let y = tape.dropout(x, 0.0, &mut rng).unwrap();
    assert_eq!(tape.data(y), tape.data(x));
}

#[test]
fn dropout_preserves_the_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut tape = Tape::new();
    let n = 20_000;
    let x = leaf(&mut tape, &[n], vec![1.0; n]);
    let y = tape.dropout(x, 0.3, &mut rng).unwrap();
    let d = tape.data(y);
    let mean = d.iter().sum::<f64>() / n as f64;
    assert!((mean - 1.0).abs() < 0.03, "{mean}");
    assert!(d.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.7).abs() < 1e-12));
}

proptest! {
    #[test]
    fn first_position_attends_only_to_itself(
        data in proptest::collection::vec(-3.0f64..3.0, 3 * 12),
    ) {
        let mut tape = Tape::new();
        let qkv = leaf(&mut tape, &[3, 12], data.clone());
        let out = tape.causal_attention(qkv, 1, 3, 2).unwrap();
        // row 0 output is its own value vector
        prop_assert_eq!(&tape.data(out)[..4], &data[8..12]);
    }

    #[test]
    fn cross_entropy_is_nonnegative(
        logits in proptest::collection::vec(-20.0f64..20.0, 12),
        target in 0usize..4,
    ) {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[3, 4], logits);
        let loss = tape.softmax_cross_entropy(x, &[Some(target), None, Some(3 - target)]).unwrap();
        prop_assert!(tape.data(loss)[0] >= 0.0);
    }
}
