use proptest::prelude::*;
use tremor_tensor::{Combine, Tape, Tensor};

fn chw() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..4, 1usize..5, 1usize..5)
}

fn tensor_pair() -> impl Strategy<Value = (Tensor<f32>, Tensor<f32>)> {
    chw().prop_flat_map(|(c, h, w)| {
        let n = c * h * w;
        (
            prop::collection::vec(-10.0f32..10.0, n),
            prop::collection::vec(-10.0f32..10.0, n),
        )
            .prop_map(move |(a, b)| {
                (
                    Tensor::new(vec![c, h, w], a).unwrap(),
                    Tensor::new(vec![c, h, w], b).unwrap(),
                )
            })
    })
}

proptest! {
    #[test]
    fn concat_then_slice_recovers_inputs((a, b) in tensor_pair()) {
        let mut tape = Tape::new();
        let va = tape.constant_ref(&a);
        let vb = tape.constant_ref(&b);
        let cat = tape.combine(va, vb, Combine::Concat).unwrap();
        let c = a.shape()[0];
        let left = tape.slice_channels(cat, 0..c).unwrap();
        let right = tape.slice_channels(cat, c..2 * c).unwrap();
        prop_assert_eq!(tape.value(left), &a);
        prop_assert_eq!(tape.value(right), &b);
    }

    #[test]
    fn subtract_is_antisymmetric((a, b) in tensor_pair()) {
        let mut tape = Tape::new();
        let va = tape.constant_ref(&a);
        let vb = tape.constant_ref(&b);
        let ab = tape.combine(va, vb, Combine::Subtract).unwrap();
        let ba = tape.combine(vb, va, Combine::Subtract).unwrap();
        for (x, y) in tape.value(ab).data().iter().zip(tape.value(ba).data()) {
            prop_assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn forward_is_bit_deterministic_and_rerecordable(
        (a, b) in tensor_pair(),
        k in prop::collection::vec(-1.0f32..1.0, 9),
    ) {
        let kernel = Tensor::new(vec![1, 1, 3, 3], k).unwrap();
        let run = || {
            let mut tape = Tape::new();
            let va = tape.constant_ref(&a);
            let vb = tape.constant_ref(&b);
            let d = tape.combine(va, vb, Combine::Subtract).unwrap();
            let c = tape.slice_channels(d, 0..1).unwrap();
            let kv = tape.constant_ref(&kernel);
            let bias = tape.constant(Tensor::zeros(vec![1]));
            let y = tape.conv2d(c, kv, bias, 1, 1).unwrap();
            let y = tape.sigmoid(y);
            let s = tape.sum(y);
            tape.value(s).data()[0].to_bits()
        };
        prop_assert_eq!(run(), run());
    }
}
