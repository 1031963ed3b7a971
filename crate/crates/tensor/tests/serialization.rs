use lsa_tensor::matn::{load_all, read_tensor, save_all, write_tensor};
use lsa_tensor::Tensor;
use proptest::prelude::*;

fn tensor_strategy() -> impl Strategy<Value = Tensor> {
    proptest::collection::vec(1usize..5, 0..4).prop_flat_map(|shape| {
        let n: usize = shape.iter().product();
        proptest::collection::vec(any::<f64>(), n).prop_map(move |data| Tensor::new(shape.clone(), data).unwrap())
    })
}

proptest! {
    #[test]
    fn matn_round_trip_is_bitwise(t in tensor_strategy()) {
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        prop_assert_eq!(buf.len(), 12 + 4 * t.rank() + 8 * t.numel());
        let back = read_tensor(&mut buf.as_slice()).unwrap().unwrap();
        prop_assert!(back.bit_eq(&t));
    }
}

#[test]
fn file_holds_concatenated_records() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.matn");
    let a = Tensor::ones(&[2, 3]);
    let b = Tensor::scalar(-1.0);
    save_all(&path, &[&a, &b]).unwrap();
    assert_eq!(load_all(&path).unwrap(), vec![a, b]);
}
