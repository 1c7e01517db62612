use neurohand_core::decoder::{align_with_labels, Ensemble, Prediction};
use neurohand_core::dsp::{Calibration, FeatureWindow};
use neurohand_core::model::{Checkpoint, ModelConfig, ModelParams};
use neurohand_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn one_hot(f: usize) -> [bool; 5] {
    let mut m = [false; 5];
    m[f] = true;
    m
}

fn full_window(seed: u64) -> FeatureWindow {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = FeatureWindow::new(224, 50);
    for i in 0..50u64 {
        let v: Vec<f64> = (0..224).map(|_| rng.gen_range(-2.0..2.0)).collect();
        w.push_values(&v, 1_000 + i * 20_000_000).unwrap();
    }
    w
}

#[test]
fn singleton_ensemble_is_the_model() {
    let m = ModelParams::init(ModelConfig::tiny(), 3).unwrap();
    let w = full_window(1);
    let want = m.forward_window(&w).unwrap();
    let e = Ensemble::new(vec![m], 0.5, None).unwrap();
    let p = e.infer_tick(&w, || w.newest_ns() + 7).unwrap();
    assert_eq!(p.probs, want);
    assert_eq!(p.latency_ns(), 7);
    assert_eq!(p.states, want.map(|v| v > 0.5));
}

#[test]
fn disjoint_models_merge_diagonally_in_any_order() {
    let models: Vec<ModelParams> = (0..5)
        .map(|f| ModelParams::init(ModelConfig::tiny().with_mask(one_hot(f)), 10 + f as u64).unwrap())
        .collect();
    let w = full_window(2);
    let outs: Vec<[f64; 5]> = models.iter().map(|m| m.forward_window(&w).unwrap()).collect();
    let e = Ensemble::new(models.clone(), 0.5, None).unwrap();
    let p = e.probs(&w.to_time_major()).unwrap();
    for f in 0..5 {
        assert_eq!(p[f], outs[f][f]);
    }
    let mut rev = models;
    rev.reverse();
    assert_eq!(Ensemble::new(rev, 0.5, None).unwrap().probs(&w.to_time_major()).unwrap(), p);
}

#[test]
fn ownership_must_be_exclusive_and_complete() {
    let a = ModelParams::init(ModelConfig::tiny().with_mask([true, true, false, false, false]), 0).unwrap();
    let b = ModelParams::init(ModelConfig::tiny().with_mask([false, true, true, true, true]), 0).unwrap();
    let c = ModelParams::init(ModelConfig::tiny().with_mask([false, false, true, true, false]), 0).unwrap();
    assert!(matches!(Ensemble::new(vec![a.clone(), b], 0.5, None), Err(Error::Config(_))));
    assert!(matches!(Ensemble::new(vec![a, c], 0.5, None), Err(Error::Config(_))));
    assert!(Ensemble::new(vec![], 0.5, None).is_err());
}

#[test]
fn checkpoints_must_share_preprocessing() {
    let a = ModelParams::init(ModelConfig::tiny().with_mask([true, false, false, false, false]), 0).unwrap();
    let b = ModelParams::init(ModelConfig::tiny().with_mask([false, true, true, true, true]), 0).unwrap();
    let cal = Calibration::identity(16);
    let mut other = cal.clone();
    other.channel_gain[0] = 2.0;
    let ok = vec![
        Checkpoint { params: a.clone(), calibration: Some(cal.clone()) },
        Checkpoint { params: b.clone(), calibration: Some(cal.clone()) },
    ];
    assert!(Ensemble::from_checkpoints(ok, 0.5).is_ok());
    let bad = vec![
        Checkpoint { params: a, calibration: Some(cal) },
        Checkpoint { params: b, calibration: Some(other) },
    ];
    assert!(Ensemble::from_checkpoints(bad, 0.5).is_err());
}

#[test]
fn partial_window_rejected() {
    let e = Ensemble::new(vec![ModelParams::zeros(ModelConfig::tiny()).unwrap()], 0.5, None).unwrap();
    let mut w = FeatureWindow::new(224, 50);
    w.push_values(&[0.0; 224], 0).unwrap();
    assert!(matches!(e.infer_tick(&w, || 0), Err(Error::Shape(_))));
}

#[test]
fn zero_network_means_no_movement() {
    let e = Ensemble::new(vec![ModelParams::zeros(ModelConfig::tiny()).unwrap()], 0.5, None).unwrap();
    let p = e.infer_tick(&full_window(0), || u64::MAX).unwrap();
    assert_eq!(p.probs, [0.5; 5]);
    assert_eq!(p.states, [false; 5]);
}

#[test]
fn predictions_align_to_label_ticks() {
    let labels = vec![[false; 5], [true; 5], [false; 5]];
    let mk = |t: u64| Prediction::new([0.9; 5], 0.5, t, t);
    let preds = [mk(19_999_999), mk(20_000_000), mk(59_999_999), mk(60_000_000)];
    let (_, _, truth) = align_with_labels(&preds, &labels);
    assert_eq!(truth, vec![[false; 5], [true; 5], [false; 5]]);
}
