mod common;

use common::{gradient_check, random_spectrogram, rng, tiny_architecture};
use proptest::prelude::*;
use touchsound::model::{
    decode_model, encode_model, init_model, load_model, save_model, train_examples, Architecture, CnnModel,
    TrainConfig,
};
use touchsound::Error;

fn tiny_batch(seed: u64, classes: usize) -> Vec<(touchsound::spectrogram::Spectrogram, usize)> {
    let mut r = rng(seed);
    (0..3).map(|i| (random_spectrogram(&mut r, 8, -80.0), i % classes)).collect()
}

#[test]
fn backprop_matches_finite_differences_on_every_parameter() {
    let model = CnnModel::init(tiny_architecture(3), 5).unwrap();
    let check = gradient_check(&model, &tiny_batch(17, 3), 1e-3, 1e-6);
    println!(
        "{} parameters, max relative error {:.3e} at {}",
        check.parameters, check.max_relative_error, check.worst_index
    );
    assert!(check.max_relative_error <= 1e-3);
}

#[test]
fn zero_learning_rate_leaves_weights_at_init() {
    let arch = tiny_architecture(3);
    let data = tiny_batch(2, 3);
    let config = TrainConfig {
        learning_rate: 0.0,
        epochs: 1,
        seed: 9,
        ..TrainConfig::default()
    };
    let (model, _) = train_examples(arch, &data, &data, &config).unwrap();
    assert_eq!(model.parameters(), CnnModel::init(arch, 9).unwrap().parameters());
}

#[test]
fn training_is_deterministic() {
    let arch = tiny_architecture(3);
    let data = tiny_batch(4, 3);
    let config = TrainConfig {
        epochs: 5,
        batch_size: 2,
        seed: 3,
        ..TrainConfig::default()
    };
    let (a, ra) = train_examples(arch, &data, &data, &config).unwrap();
    let (b, rb) = train_examples(arch, &data, &data, &config).unwrap();
    assert_eq!(a.parameters(), b.parameters());
    assert_eq!(ra.epoch_loss, rb.epoch_loss);
    assert!(ra.final_loss() < ra.initial_loss);
}

#[test]
fn empty_splits_are_rejected() {
    let arch = tiny_architecture(3);
    let data = tiny_batch(4, 3);
    let config = TrainConfig::default();
    assert!(matches!(train_examples(arch, &[], &data, &config), Err(Error::EmptySplit(_))));
    assert!(matches!(train_examples(arch, &data, &[], &config), Err(Error::EmptySplit(_))));
}

#[test]
fn saved_model_predicts_identically() {
    let model = init_model(21, 6).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.tsm");
    save_model(&model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded.parameters(), model.parameters());
    let mut r = rng(77);
    for _ in 0..10 {
        let s = random_spectrogram(&mut r, 64, -80.0);
        assert_eq!(model.forward(&s).unwrap(), loaded.forward(&s).unwrap());
    }
}

#[test]
fn file_layout_is_magic_version_classes_then_weights() {
    let model = init_model(1, 4).unwrap();
    let bytes = encode_model(&model).unwrap();
    assert_eq!(&bytes[..4], b"TSM1");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 4);
    assert_eq!(bytes.len(), 12 + 4 * Architecture::standard(4).parameter_count());
    let first = f32::from_le_bytes(bytes[12..16].try_into().unwrap());
    assert_eq!(first, model.parameters()[0]);

    assert!(matches!(decode_model(&bytes[..bytes.len() - 1]), Err(Error::SizeMismatch { .. })));
    let mut wrong = bytes.clone();
    wrong[0] = b'X';
    assert!(matches!(decode_model(&wrong), Err(Error::BadMagic(_))));
    let mut future = bytes;
    future[4] = 2;
    assert!(matches!(decode_model(&future), Err(Error::VersionMismatch(2))));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn softmax_is_a_distribution(seed in any::<u64>(), classes in 2usize..8) {
        let model = CnnModel::init(tiny_architecture(classes), seed).unwrap();
        let mut r = rng(seed ^ 1);
        let probs = model.forward(&random_spectrogram(&mut r, 8, -80.0)).unwrap();
        prop_assert_eq!(probs.len(), classes);
        prop_assert!(probs.iter().all(|&p| p >= 0.0));
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
    }
}
