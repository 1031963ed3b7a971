use std::collections::HashMap;

use lsa_core::data::io::{parse_tsv, render_batch, to_tsv};
use lsa_core::data::question::{Attribute, Axis, Descriptor, Relation};
use lsa_core::data::scene::{Color, Object, Shape, IMAGE_SIZE};
use lsa_core::data::{
    evaluate, generate, majority_rate, Dataset, Family, FamilyMix, Question, Scene, Split, ANSWERS, EVAL_OFFSET,
};
use proptest::prelude::*;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_scene(rng: &mut ChaCha8Rng) -> Scene {
    let k = rng.gen_range(1..=8);
    let objects = sample(rng, 16, k)
        .into_iter()
        .map(|c| Object {
            row: c / 4,
            col: c % 4,
            color: Color::ALL[rng.gen_range(0..3)],
            shape: Shape::ALL[rng.gen_range(0..3)],
        })
        .collect();
    Scene::new(4, objects).unwrap()
}

#[test]
fn same_seed_gives_identical_files() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let ds = Dataset::generate(7, 200, 40, &FamilyMix::default(), 12).unwrap();
        ds.save(d.path(), &["seed=7".to_string()]).unwrap();
    }
    for f in ["train.tsv", "eval.tsv", "vocab.txt"] {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        let b = std::fs::read(dirs[1].path().join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let back = Dataset::load(dirs[0].path(), 12).unwrap();
    let fresh = Dataset::generate(7, 200, 40, &FamilyMix::default(), 12).unwrap();
    assert_eq!(back.train.len(), 200);
    assert_eq!(back.vocab, fresh.vocab);
    assert!(back.train.iter().zip(&fresh.train).all(|(a, b)| a.id == b.id && a.question == b.question && a.scene == b.scene));
}

#[test]
fn existence_only_mix_answers_yes_or_no() {
    let samples = generate(2, 300, &FamilyMix::only(Family::Existence), Split::Train).unwrap();
    assert!(samples.iter().all(|s| s.family() == Family::Existence && (s.answer == "yes" || s.answer == "no")));
}

#[test]
fn stored_answers_match_the_evaluator() {
    let samples = generate(11, 10_000, &FamilyMix::default(), Split::Train).unwrap();
    let reparsed = parse_tsv(&to_tsv(&samples, &[])).unwrap();
    for (s, r) in samples.iter().zip(&reparsed) {
        assert_eq!(evaluate(&s.scene, &s.question).unwrap(), s.answer, "{}", s.id);
        assert_eq!(evaluate(&r.scene, &r.question).unwrap(), r.answer);
        assert!(ANSWERS.contains(&s.answer));
    }
}

#[test]
fn families_are_answer_balanced() {
    let samples = generate(5, 2_000, &FamilyMix::default(), Split::Eval).unwrap();
    for family in Family::ALL {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let of: Vec<_> = samples.iter().filter(|s| s.family() == family).collect();
        assert_eq!(of.len(), 500);
        for s in &of {
            *counts.entry(s.answer).or_default() += 1;
        }
        let top = counts.values().max().unwrap();
        assert!(*top as f64 / of.len() as f64 <= 0.6, "{family}: {counts:?}");
    }
    assert!((majority_rate(&samples) - 0.375).abs() < 0.01);
}

#[test]
fn splits_use_disjoint_streams() {
    assert!(EVAL_OFFSET > u32::MAX as u64);
    let train = generate(3, 500, &FamilyMix::default(), Split::Train).unwrap();
    let eval = generate(3, 500, &FamilyMix::default(), Split::Eval).unwrap();
    assert!(train.iter().all(|s| s.id.starts_with("train-")));
    assert!(eval.iter().all(|s| s.id.starts_with("eval-")));
    let same = train.iter().zip(&eval).filter(|(a, b)| a.scene == b.scene).count();
    assert!(same < 5);
}

#[test]
fn evaluator_examples() {
    let empty = Scene::new(4, vec![]).unwrap();
    for d in [Descriptor { color: None, shape: None }, Descriptor { color: Some(Color::Red), shape: None }] {
        assert_eq!(evaluate(&empty, &Question::Exists(d)).unwrap(), "no");
    }
    let one = Scene::parse_spec("4x4:red-circle@0,0").unwrap();
    assert_eq!(evaluate(&one, &Question::QueryColor(Shape::Circle)).unwrap(), "red");
    assert_eq!(evaluate(&one, &Question::QueryShape(Color::Red)).unwrap(), "circle");
    assert!(evaluate(&one, &Question::QueryColor(Shape::Square)).is_err());
    let q = Question::parse("what color is the circle?").unwrap();
    assert_eq!(evaluate(&one, &q).unwrap(), "red");
}

#[test]
fn extremes_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut answered = 0;
    for _ in 0..2_000 {
        let scene = random_scene(&mut rng);
        let axis = if rng.gen_bool(0.5) { Axis::Horizontal } else { Axis::Vertical };
        let attr = if rng.gen_bool(0.5) { Attribute::Color } else { Attribute::Shape };
        let key = |o: &Object| if axis == Axis::Horizontal { o.col } else { o.row };
        let objs = scene.objects();
        // Strict extremes: an object beats every other object on the axis.
        let lo: Vec<_> = objs.iter().filter(|a| objs.iter().all(|b| a == &b || key(a) < key(b))).collect();
        let hi: Vec<_> = objs.iter().filter(|a| objs.iter().all(|b| a == &b || key(a) > key(b))).collect();
        let got = evaluate(&scene, &Question::SameExtremes(axis, attr));
        match (lo.as_slice(), hi.as_slice()) {
            ([a], [b]) if a != b => {
                let same = match attr {
                    Attribute::Color => a.color == b.color,
                    Attribute::Shape => a.shape == b.shape,
                };
                assert_eq!(got.unwrap(), if same { "yes" } else { "no" });
                answered += 1;
            }
            ([a], [b]) if a == b => assert_eq!(got.unwrap(), "yes"),
            _ => assert!(got.is_err()),
        }
    }
    assert!(answered > 100);
}

#[test]
fn relations_match_pair_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..2_000 {
        let scene = random_scene(&mut rng);
        let d = |rng: &mut ChaCha8Rng| Descriptor {
            color: rng.gen_bool(0.5).then(|| Color::ALL[rng.gen_range(0..3)]),
            shape: rng.gen_bool(0.5).then(|| Shape::ALL[rng.gen_range(0..3)]),
        };
        let (a, b) = (d(&mut rng), d(&mut rng));
        let r = Relation::ALL[rng.gen_range(0..4)];
        let objs = scene.objects();
        let mut found = false;
        for (i, x) in objs.iter().enumerate() {
            for (j, y) in objs.iter().enumerate() {
                let holds = match r {
                    Relation::LeftOf => x.col < y.col,
                    Relation::RightOf => x.col > y.col,
                    Relation::Above => x.row < y.row,
                    Relation::Below => x.row > y.row,
                };
                found |= i != j && a.matches(x) && b.matches(y) && holds;
            }
        }
        let expect = if found { "yes" } else { "no" };
        assert_eq!(evaluate(&scene, &Question::Relate(a, r, b)).unwrap(), expect);
    }
}

#[test]
fn rendering_places_objects_in_their_cells() {
    let scene = Scene::parse_spec("4x4:red-circle@0,0;blue-square@3,2").unwrap();
    let img = scene.render();
    assert_eq!(img.shape(), &[3, IMAGE_SIZE, IMAGE_SIZE]);
    assert_eq!(img.at(&[0, 4, 4]), 1.0);
    assert_eq!(img.at(&[2, 28, 20]), 1.0);
    assert_eq!(img.at(&[1, 4, 4]), 0.0);
    let lit: f64 = img.data().iter().sum();
    let red: f64 = img.data()[..IMAGE_SIZE * IMAGE_SIZE].iter().sum();
    for y in 0..IMAGE_SIZE {
        for x in 0..IMAGE_SIZE {
            if y >= 8 || x >= 8 {
                assert_eq!(img.at(&[0, y, x]), 0.0);
            }
        }
    }
    assert!(red > 20.0 && lit > red);
    let samples = generate(1, 8, &FamilyMix::default(), Split::Train).unwrap();
    let refs: Vec<_> = samples.iter().collect();
    let batch = render_batch(&refs);
    assert_eq!(batch.shape(), &[8, 3, 32, 32]);
    assert_eq!(&batch.data()[3 * 3072..4 * 3072], samples[3].scene.render().data());
}

#[test]
fn malformed_inputs_are_rejected() {
    assert!(parse_tsv("x\tis there a circle?\tmaybe\t4x4:-").is_err());
    assert!(parse_tsv("x\twhy?\tyes\t4x4:-").is_err());
    assert!(parse_tsv("x\tis there a circle?\tyes").is_err());
    assert!(Scene::parse_spec("4x4:red-circle@0,0;red-square@0,0").is_err());
    assert!(Scene::parse_spec("4x4:red-circle@4,0").is_err());
    assert!(Scene::parse_spec("5x5:-").is_err());
    assert!(parse_tsv("# only a header\n").unwrap().is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn scene_specs_round_trip(seed in 0u64..100_000) {
        let scene = random_scene(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(Scene::parse_spec(&scene.spec()).unwrap(), scene);
    }

    #[test]
    fn quotas_apportion_exactly(w in proptest::array::uniform4(0.0f64..5.0), count in 1usize..500) {
        prop_assume!(w.iter().sum::<f64>() > 0.0);
        let q = FamilyMix(w).quotas(count);
        prop_assert_eq!(q.iter().sum::<usize>(), count);
        let total: f64 = w.iter().sum();
        for (qi, wi) in q.iter().zip(w) {
            prop_assert!((*qi as f64 - wi / total * count as f64).abs() < 1.0 + 1e-9);
        }
    }
}
