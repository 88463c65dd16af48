//! Desk-scale smoke checks: the default dataset trains to a usable model
//! and the attack loop makes progress. Heavier gates live in the
//! acceptance suite.

use flicker_core::attack::{
    attack, clean_filter, fooling_ratio, AttackConfig, AttackMode, TauMode,
};
use flicker_core::dataset::{generate_dataset, SyntheticDatasetSpec};
use flicker_core::net::train::{accuracy, train, TrainConfig};
use flicker_core::net::ArchId;
use std::time::Instant;

#[test]
#[ignore = "timing probe; run by hand with --nocapture"]
fn timing_probe() {
    let spec = SyntheticDatasetSpec::desk_scale(4, 1);
    let data = generate_dataset::<f64>(&spec).unwrap();
    let t0 = Instant::now();
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default_desk(2)
    };
    let (model, stats) = train(&data, ArchId::A, 6, &cfg).unwrap();
    println!(
        "1 epoch / {} clips: {:?} (loss {:.4})",
        data.len(),
        t0.elapsed(),
        stats[0].mean_loss
    );

    let one = vec![data[0].clone()];
    let mut acfg = AttackConfig::default_for(AttackMode::SingleVideo, 3);
    acfg.iterations = 50;
    acfg.eval_every = 50;
    let t1 = Instant::now();
    attack(&model, &one, &acfg).unwrap();
    println!("50 single-video iterations: {:?}", t1.elapsed());

    let t2 = Instant::now();
    let fr = fooling_ratio(
        &model,
        &data,
        &flicker_core::PerturbationF64::zeros(spec.dims).unwrap(),
        TauMode::Synchronized,
    )
    .unwrap();
    println!("eval {} clips: {:?} (fr {})", data.len(), t2.elapsed(), fr);
}

#[test]
#[ignore = "several minutes; the acceptance suite covers the real gate"]
fn desk_scale_training_reaches_gate() {
    let train_spec = SyntheticDatasetSpec::desk_scale(20, 11);
    let eval_spec = SyntheticDatasetSpec {
        seed: 12,
        clips_per_class: 10,
        ..train_spec
    };
    let train_set = generate_dataset::<f64>(&train_spec).unwrap();
    let eval_set = generate_dataset::<f64>(&eval_spec).unwrap();
    let t0 = Instant::now();
    let (model, stats) = train(&train_set, ArchId::A, 6, &TrainConfig::default_desk(7)).unwrap();
    let acc = accuracy(&model, &eval_set).unwrap();
    println!(
        "trained {} epochs in {:?}; train acc {:.3}, held-out acc {:.3}",
        stats.len(),
        t0.elapsed(),
        stats.last().unwrap().train_accuracy,
        acc
    );
    assert!(acc >= 0.95);

    let (kept, n, total) = clean_filter(&model, &eval_set).unwrap();
    println!("clean filter kept {}/{}", n, total);
    assert!(!kept.is_empty());
}
