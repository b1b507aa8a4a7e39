use super::*;
use crate::data::SynthConfig;
use crate::models::{ArchName, ArchSpec};
use rand::Rng;

fn toy_spec(name: ArchName) -> ArchSpec {
    let mut spec = ArchSpec::defaults(name).with_dims(6, 4, 8, 4, 3);
    spec.branch_depth = 1;
    spec
}

#[test]
fn bce_uniform_half_is_classes_times_ln2() {
    let mut tape = Tape::new();
    let (b, c) = (4, 7);
    let probs = tape.constant(Tensor::new(vec![b, c], vec![0.5; b * c]).unwrap());
    let labels = Tensor::new(
        vec![b, c],
        (0..b * c).map(|i| (i % 3 == 0) as u8 as f64).collect(),
    )
    .unwrap();
    let loss = bce_loss(&mut tape, probs, &labels).unwrap();
    let expect = c as f64 * std::f64::consts::LN_2;
    assert!((tape.value(loss).item().unwrap() - expect).abs() < 1e-12);
}

#[test]
fn bce_hand_evaluated() {
    // B=1, C=2, probs=[0.8, 0.3], labels=[1, 0] -> -(ln 0.8 + ln 0.7)
    let mut tape = Tape::new();
    let probs = tape.constant(Tensor::new(vec![1, 2], vec![0.8, 0.3]).unwrap());
    let labels = Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap();
    let loss = bce_loss(&mut tape, probs, &labels).unwrap();
    let expect = -(0.8f64.ln() + 0.7f64.ln());
    assert!((tape.value(loss).item().unwrap() - expect).abs() < 1e-12);
    assert!((expect - 0.5798).abs() < 1e-4);
}

#[test]
fn bce_zero_only_at_perfect_predictions() {
    let mut tape = Tape::new();
    let probs = tape.constant(Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap());
    let labels = Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap();
    let loss = bce_loss(&mut tape, probs, &labels).unwrap();
    assert!(tape.value(loss).item().unwrap().abs() < 1e-10);

    let probs = tape.constant(Tensor::new(vec![1, 2], vec![0.9, 0.1]).unwrap());
    let loss = bce_loss(&mut tape, probs, &labels).unwrap();
    assert!(tape.value(loss).item().unwrap() > 0.0);
}

#[test]
fn bce_rejects_soft_labels_and_shape_mismatch() {
    let mut tape = Tape::new();
    let probs = tape.constant(Tensor::new(vec![1, 2], vec![0.5, 0.5]).unwrap());
    let soft = Tensor::new(vec![1, 2], vec![0.5, 1.0]).unwrap();
    assert!(bce_loss(&mut tape, probs, &soft).is_err());
    let wrong = Tensor::new(vec![2, 1], vec![1.0, 0.0]).unwrap();
    assert!(bce_loss(&mut tape, probs, &wrong).is_err());
}

#[test]
fn bce_logit_gradient_identity() {
    // d loss / d logits = (probs - labels) / batch, through sigmoid + loss
    let mut r = crate::rng::rng(31);
    let (b, c) = (3, 5);
    let logits = Tensor::new(vec![b, c], (0..b * c).map(|_| r.gen_range(-3.0..3.0)).collect())
        .unwrap()
        .with_grad();
    let labels = Tensor::new(vec![b, c], (0..b * c).map(|_| r.gen_bool(0.5) as u8 as f64).collect()).unwrap();

    let mut tape = Tape::new();
    let z = tape.leaf(logits.clone());
    let probs = tape.sigmoid(z).unwrap();
    let loss = bce_loss(&mut tape, probs, &labels).unwrap();
    tape.backward(loss).unwrap();
    let grad = tape.grad(z).unwrap();
    let probs_val = tape.value(probs).data();
    for i in 0..b * c {
        let analytic = (probs_val[i] - labels.data()[i]) / b as f64;
        assert!(
            (grad[i] - analytic).abs() < 1e-10,
            "coord {i}: {} vs {analytic}",
            grad[i]
        );
    }
}

#[test]
fn epochs_zero_is_rejected() {
    let cfg = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    assert!(cfg.validate().is_err());
}

#[test]
fn single_step_descends_on_separable_problem() {
    // two classes keyed directly to input signs; one step at lr 1e-2 must
    // strictly decrease the loss
    let cfg = SynthConfig {
        num_classes: 2,
        num_records: 64,
        audio_dim: 4,
        visual_dim: 6,
        audio_only: 1,
        visual_only: 1,
        cross_modal: 0,
        noise_std: 0.0,
        distractor_dims: 3,
        seed: 11,
    };
    let data = {
        let mut c = cfg;
        c.visual_dim = 4; // 1 signal + 3 distractors
        c.generate().unwrap()
    };
    let mut spec = toy_spec(ArchName::FcEarly);
    spec.visual_dim = 4;
    spec.num_classes = 2;
    let mut model = crate::models::Model::build(spec, 3).unwrap();
    let mut state = OptState::new(&model.params);
    let train_cfg = TrainConfig {
        learning_rate: 1e-2,
        dropout_rate: 0.0,
        weight_decay: 0.0,
        ..TrainConfig::default()
    };
    let batch = batch_iter(&data, 64, 1, 0).unwrap().next().unwrap();
    let first = train_step(
        &mut model, &batch.visual, &batch.audio, &batch.labels, &mut state, &train_cfg, 0,
    )
    .unwrap();
    let second = train_step(
        &mut model, &batch.visual, &batch.audio, &batch.labels, &mut state, &train_cfg, 0,
    )
    .unwrap();
    assert!(second < first, "loss did not decrease: {first} -> {second}");
}

#[test]
fn fit_is_deterministic_and_reports_every_epoch() {
    let synth = SynthConfig {
        num_classes: 4,
        num_records: 120,
        audio_dim: 4,
        visual_dim: 4,
        audio_only: 1,
        visual_only: 1,
        cross_modal: 2,
        noise_std: 0.1,
        distractor_dims: 1,
        seed: 2,
    };
    let data = synth.generate().unwrap();
    let spec = {
        let mut s = toy_spec(ArchName::AttendFusion);
        s.visual_dim = 4;
        s.audio_dim = 4;
        s.num_classes = 4;
        s.attn_dim = 4;
        s
    };
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 32,
        learning_rate: 1e-3,
        seed: 9,
        ..TrainConfig::default()
    };
    let run = || {
        let mut model = crate::models::Model::build(spec.clone(), cfg.seed).unwrap();
        fit(&mut model, &data, None, &cfg, EvalSettings::default(), |_, _, _| Ok(()))
            .unwrap()
            .history
    };
    let a = run();
    let b = run();
    assert_eq!(a.len(), 3);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.loss.to_bits(), y.loss.to_bits());
        assert_eq!(x.gap.to_bits(), y.gap.to_bits());
        assert_eq!(x.f1.to_bits(), y.f1.to_bits());
    }
}

#[test]
fn fit_rejects_mismatched_dims() {
    let synth = SynthConfig {
        num_classes: 4,
        num_records: 10,
        audio_dim: 5,
        visual_dim: 5,
        audio_only: 1,
        visual_only: 1,
        cross_modal: 2,
        noise_std: 0.1,
        distractor_dims: 2,
        seed: 2,
    };
    let data = synth.generate().unwrap();
    let mut model = crate::models::Model::build(toy_spec(ArchName::FcLate), 1).unwrap();
    let err = fit(
        &mut model,
        &data,
        None,
        &TrainConfig::default(),
        EvalSettings::default(),
        |_, _, _| Ok(()),
    )
    .unwrap_err();
    assert!(matches!(err, AvError::ShapeMismatch(_)));
}
