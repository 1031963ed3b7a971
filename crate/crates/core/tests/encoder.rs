use lsa_core::diagnostics::{gradcheck_component, Component};
use lsa_core::encoder::{words, CellKind, QuestionEncoder, Vocabulary, PAD, UNK};
use lsa_core::init::Builder;
use lsa_tensor::{Graph, ParamStore, Tensor};
use proptest::prelude::*;

fn encoder(cell: CellKind, seed: u64) -> (ParamStore, QuestionEncoder) {
    let mut store = ParamStore::new();
    let enc = QuestionEncoder::new(&mut Builder::new(&mut store, seed).scope("encoder"), 10, 4, 3, cell).unwrap();
    (store, enc)
}

fn encode(store: &ParamStore, enc: &QuestionEncoder, batch: &[Vec<usize>]) -> Tensor {
    let mut g = Graph::new(store, false, false);
    let h = enc.forward(&mut g, batch).unwrap();
    g.value(h).clone()
}

fn param(store: &ParamStore, name: &str) -> Tensor {
    store.get(store.id(&format!("encoder.{name}")).unwrap()).clone()
}

/// `x·W + h·U + b` by explicit loops.
fn affine(store: &ParamStore, gate: &str, x: &[f64], h: &[f64]) -> Vec<f64> {
    let (w, u, b) = (param(store, &format!("w_{gate}")), param(store, &format!("u_{gate}")), param(store, &format!("b_{gate}")));
    let hd = b.numel();
    (0..hd)
        .map(|j| {
            let xs: f64 = x.iter().enumerate().map(|(i, v)| v * w.data()[i * hd + j]).sum();
            let hs: f64 = h.iter().enumerate().map(|(i, v)| v * u.data()[i * hd + j]).sum();
            xs + hs + b.data()[j]
        })
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn tokenization_examples() {
    let vocab = Vocabulary::from_corpus(["is the circle red?", "what color is the square?"]);
    let ids = vocab.tokenize("Is the circle red?", 8);
    assert_eq!(&ids[..4], &[vocab.id("is"), vocab.id("the"), vocab.id("circle"), vocab.id("red")]);
    assert!(ids[4..].iter().all(|&i| i == PAD));
    assert_eq!(vocab.tokenize("", 5), vec![PAD; 5]);
    assert_eq!(vocab.tokenize("is the octagon red", 4)[2], UNK);
    assert_eq!(words("What  color, is it?"), vec!["what", "color", "is", "it"]);
}

#[test]
fn vocabulary_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let vocab = Vocabulary::from_corpus(["a b b c", "c c"]);
    let path = dir.path().join("vocab.txt");
    vocab.save(&path).unwrap();
    assert_eq!(Vocabulary::load(&path).unwrap(), vocab);
    assert!(Vocabulary::parse("a\na\n").is_err());
}

#[test]
fn all_pad_question_encodes_to_zero() {
    let (store, enc) = encoder(CellKind::Gated, 1);
    let h = encode(&store, &enc, &[vec![PAD; 6], vec![PAD; 6]]);
    assert!(h.data().iter().all(|&v| v == 0.0));
}

#[test]
fn encoding_is_deterministic() {
    let (store, enc) = encoder(CellKind::Gated, 2);
    let a = encode(&store, &enc, &[vec![5]]);
    let b = encode(&store, &enc, &[vec![5]]);
    assert!(a.bit_eq(&b));
}

#[test]
fn trailing_pads_do_not_change_encoding() {
    let (store, enc) = encoder(CellKind::Gated, 3);
    let short = encode(&store, &enc, &[vec![4, 7, 2]]);
    let long = encode(&store, &enc, &[vec![4, 7, 2, PAD, PAD, PAD]]);
    assert!(short.bit_eq(&long));
    let mixed = encode(&store, &enc, &[vec![4, 7, 2, PAD, PAD], vec![3, 3, 3, 3, 9]]);
    assert!(mixed.data()[..3].iter().zip(short.data()).all(|(a, b)| (a - b).abs() < 1e-14));
}

#[test]
fn vanilla_cell_matches_closed_form() {
    let (store, enc) = encoder(CellKind::Vanilla, 4);
    let table = param(&store, "embedding");
    let e = |id: usize| table.data()[id * 4..(id + 1) * 4].to_vec();
    let h1: Vec<f64> = affine(&store, "n", &e(6), &[0.0; 3]).into_iter().map(f64::tanh).collect();
    let h2: Vec<f64> = affine(&store, "n", &e(2), &h1).into_iter().map(f64::tanh).collect();
    let got = encode(&store, &enc, &[vec![6, 2]]);
    for (a, b) in got.data().iter().zip(&h2) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn gated_cell_matches_loop() {
    let (mut store, enc) = encoder(CellKind::Gated, 5);
    for gate in ["z", "r", "n"] {
        let id = store.id(&format!("encoder.b_{gate}")).unwrap();
        *store.get_mut(id) = Tensor::vector(vec![0.1, -0.2, 0.3]);
    }
    let table = param(&store, "embedding");
    let e = |id: usize| table.data()[id * 4..(id + 1) * 4].to_vec();
    let mut h = vec![0.0; 3];
    for id in [3, 8, 1] {
        let x = e(id);
        let z: Vec<f64> = affine(&store, "z", &x, &h).into_iter().map(sigmoid).collect();
        let r: Vec<f64> = affine(&store, "r", &x, &h).into_iter().map(sigmoid).collect();
        let rh: Vec<f64> = r.iter().zip(&h).map(|(a, b)| a * b).collect();
        let n: Vec<f64> = affine(&store, "n", &x, &rh).into_iter().map(f64::tanh).collect();
        h = (0..3).map(|j| (1.0 - z[j]) * n[j] + z[j] * h[j]).collect();
    }
    let got = encode(&store, &enc, &[vec![3, 8, 1]]);
    for (a, b) in got.data().iter().zip(&h) {
        assert!((a - b).abs() < 1e-14, "{got:?} vs {h:?}");
    }
}

#[test]
fn rejects_bad_batches() {
    let (store, enc) = encoder(CellKind::Gated, 6);
    let mut g = Graph::new(&store, false, false);
    assert!(enc.forward(&mut g, &[vec![10]]).is_err());
    assert!(enc.forward(&mut g, &[vec![1, 2], vec![1]]).is_err());
    assert!(enc.forward(&mut g, &[]).is_err());
}

#[test]
fn encoder_gradients_match_finite_differences() {
    for seed in 0..3 {
        let r = gradcheck_component(Component::Encoder, seed).unwrap();
        assert!(r.passed(), "{r:?}");
    }
}

proptest! {
    #[test]
    fn tokenize_has_fixed_length(text in "[a-z ?]{0,60}", len in 1usize..16) {
        let vocab = Vocabulary::from_corpus(["is there a red circle"]);
        let ids = vocab.tokenize(&text, len);
        prop_assert_eq!(ids.len(), len);
        prop_assert!(ids.iter().all(|&i| i < vocab.size()));
        let real = words(&text).len().min(len);
        prop_assert!(ids[..real].iter().all(|&i| i != PAD));
        prop_assert!(ids[real..].iter().all(|&i| i == PAD));
    }
}
