// scratch diagnostics; removed before final
use flicker_core::attack::{
    attack, clean_filter, AttackConfig, AttackMode, MarginDirection, MarginSpace, MarginSpec,
    RegWeights,
};
use flicker_core::dataset::{generate_dataset, SyntheticDatasetSpec};
use flicker_core::net::train::{train, TrainConfig};
use flicker_core::net::ArchId;
use rayon::prelude::*;
use std::time::Instant;

#[test]
#[ignore]
fn single_video_tuned() {
    let train_spec = SyntheticDatasetSpec::desk_scale(20, flicker_core::rng::derive_seed(7, 1));
    let eval_spec = SyntheticDatasetSpec {
        seed: flicker_core::rng::derive_seed(7, 2),
        clips_per_class: 10,
        ..train_spec
    };
    let train_set = generate_dataset::<f64>(&train_spec).unwrap();
    let eval_set = generate_dataset::<f64>(&eval_spec).unwrap();
    let (model, _) = train(&train_set, ArchId::A, 6, &TrainConfig::default_desk(7)).unwrap();
    let (kept, _, _) = clean_filter(&model, &eval_set).unwrap();

    for (label, lambda, lr, iters, every) in [
        ("lam5 lr2e-3 700", 5.0, 2e-3, 700usize, 25usize),
        ("lam10 lr2e-3 700", 10.0, 2e-3, 700, 25),
        ("lam5 lr1e-3 1000", 5.0, 1e-3, 1000, 25),
    ] {
        let t0 = Instant::now();
        let results: Vec<(f64, f64)> = (0..12usize)
            .into_par_iter()
            .map(|i| {
                let mut cfg = AttackConfig::<f64>::default_for(AttackMode::SingleVideo, i as u64);
                cfg.margin = MarginSpec {
                    m: 0.05,
                    space: MarginSpace::LogitWithProbabilityMargin,
                    direction: MarginDirection::Untargeted { original: 0 },
                };
                cfg.weights = RegWeights {
                    lambda,
                    beta1: 0.5,
                    beta2: 0.5,
                };
                cfg.learning_rate = lr;
                cfg.iterations = iters;
                cfg.eval_every = every;
                let one = vec![kept[i * 4].clone()];
                let r = attack(&model, &one, &cfg).unwrap();
                let best = r
                    .history
                    .iter()
                    .cloned()
                    .reduce(|a, b| {
                        if b.fooling_ratio > a.fooling_ratio
                            || (b.fooling_ratio == a.fooling_ratio
                                && b.thickness_pct < a.thickness_pct)
                        {
                            b
                        } else {
                            a
                        }
                    })
                    .unwrap();
                (best.fooling_ratio, best.thickness_pct)
            })
            .collect();
        let fooled = results.iter().filter(|(f, _)| *f >= 1.0).count();
        let mean_th: f64 = results.iter().map(|(_, t)| t).sum::<f64>() / results.len() as f64;
        let max_th = results.iter().map(|(_, t)| *t).fold(0.0, f64::max);
        println!(
            "{}: fooled {}/12, mean thickness {:.2}%, max {:.2}% in {:?}",
            label,
            fooled,
            mean_th,
            max_th,
            t0.elapsed()
        );
    }
}
