//! Universal flickering attacks against random baselines over an
//! l-infinity budget sweep: the Table-2-shaped experiment.

use super::{ensure_out_dir, load_config};
use crate::artifacts::{
    mean_std, rows_to_csv, write_json, BaselineStats, EvalReportDoc, PlotDoc, PlotSeries,
    ReportRow, SweepBudget, SweepDoc, EVAL_REPORT_SCHEMA, PLOT_SCHEMA, SWEEP_SCHEMA,
};
use crate::commands::attack::attack_name;
use crate::config::resolve;
use crate::data::{load_split, stem};
use flicker_core::attack::{
    attack, baseline_minmax, baseline_shuffle, baseline_uniform, clean_filter, fooling_ratio,
    metric_roughness, metric_thickness, self_eval, to_percent, AttackConfig, AttackMode, TauMode,
};
use flicker_core::error::{Error, Result};
use flicker_core::io::load_checkpoint;
use flicker_core::rng::derive_seed;
use flicker_core::video::Perturbation;
use std::path::PathBuf;

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated budgets as percent of the intensity range.
    #[arg(long)]
    pub linf_pct: Option<String>,
    /// Random-baseline repeats per budget.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Universal-attack iterations per budget.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Train the universal perturbations under random shifts.
    #[arg(long)]
    pub time_invariant: bool,
    /// Loss space for the universal attacks: prob (default) or logit.
    #[arg(long)]
    pub space: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub struct BaselineKind {
    pub name: &'static str,
    pub draw: fn(&Perturbation<f64>, u64) -> Perturbation<f64>,
}

pub const BASELINES: [BaselineKind; 3] = [
    BaselineKind {
        name: "random_uniform",
        draw: baseline_uniform,
    },
    BaselineKind {
        name: "random_minmax",
        draw: baseline_minmax,
    },
    BaselineKind {
        name: "shuffle",
        draw: baseline_shuffle,
    },
];

pub fn run(args: SweepArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let seed = resolve(args.seed, cfg.parse_value("", "seed")?, 0);
    let budgets: Vec<f64> = match &args.linf_pct {
        Some(raw) => raw
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::validation(format!("bad budget {:?}", p)))
            })
            .collect::<Result<_>>()?,
        None => cfg
            .parse_list("sweep", "linf_pct")?
            .unwrap_or_else(|| vec![5.0, 10.0, 15.0, 20.0]),
    };
    if budgets.is_empty() || budgets.iter().any(|&b| !(b > 0.0)) {
        return Err(Error::validation(
            "budget list must be non-empty and positive".to_string(),
        ));
    }
    let repeats = resolve(args.repeats, cfg.parse_value("sweep", "repeats")?, 10);
    if repeats < 1 {
        return Err(Error::validation("repeats must be >= 1".to_string()));
    }
    let iterations = resolve(args.iterations, cfg.parse_value("sweep", "iterations")?, 1200);

    let params = load_checkpoint::<f64>(&args.model, None)?;
    let model_name = stem(&args.model);
    let train_set = load_split(&args.data, "train")?;
    let eval_set = load_split(&args.data, "eval")?;
    let (filtered_train, _, _) = clean_filter(&params, &train_set)?;
    let (filtered_eval, kept, total) = clean_filter(&params, &eval_set)?;
    println!("clean filter: eval {}/{}", kept, total);
    if filtered_train.is_empty() || filtered_eval.is_empty() {
        return Err(Error::validation(
            "clean filter left an empty split".to_string(),
        ));
    }
    let dims = *filtered_train[0].video.dims();
    let universal_name = attack_name(AttackMode::Universal, args.time_invariant);

    let mut doc = SweepDoc {
        schema: SWEEP_SCHEMA.to_string(),
        model_name: model_name.clone(),
        dims,
        repeats,
        budgets: Vec::new(),
    };
    let mut rows: Vec<ReportRow> = Vec::new();

    let space = crate::commands::attack::parse_space(
        args.space
            .as_deref()
            .or_else(|| cfg.get("attack", "space"))
            .unwrap_or("prob"),
    )?;
    let margin = resolve(args.margin, cfg.parse_value("attack", "margin")?, 0.05);
    let learning_rate = resolve(
        args.learning_rate,
        cfg.parse_value("attack", "learning_rate")?,
        1e-3,
    );
    let weights = flicker_core::attack::RegWeights {
        lambda: resolve(args.lambda, cfg.parse_value("attack", "lambda")?, 1.0),
        beta1: resolve(args.beta1, cfg.parse_value("attack", "beta1")?, 0.5),
        beta2: resolve(args.beta2, cfg.parse_value("attack", "beta2")?, 0.5),
    };

    for (bi, &pct) in budgets.iter().enumerate() {
        let zeta = pct / 100.0 * dims.range();
        let mut ac: AttackConfig<f64> =
            AttackConfig::default_for(AttackMode::Universal, derive_seed(seed, 100 + bi as u64));
        ac.time_invariant = args.time_invariant;
        ac.iterations = iterations;
        ac.zeta = Some(zeta);
        ac.learning_rate = learning_rate;
        ac.weights = weights;
        ac.margin = flicker_core::attack::MarginSpec {
            m: margin,
            space,
            direction: flicker_core::attack::MarginDirection::Untargeted { original: 0 },
        };
        let result = attack(&params, &filtered_train, &ac)?;
        let eval = self_eval(&params, &result.delta, &filtered_eval, TauMode::Synchronized)?;
        println!(
            "budget {:>5.1}%: universal fooling {:.3} (thickness {:.2}%)",
            pct, eval.fooling_ratio, eval.thickness_pct
        );

        let mut baselines = Vec::new();
        for (ki, kind) in BASELINES.iter().enumerate() {
            let mut ratios = Vec::with_capacity(repeats);
            let mut thicknesses = Vec::with_capacity(repeats);
            let mut roughnesses = Vec::with_capacity(repeats);
            let mut linfs = Vec::with_capacity(repeats);
            for rep in 0..repeats {
                let draw_seed =
                    derive_seed(seed, ((bi as u64 + 1) << 16) | ((ki as u64) << 8) | rep as u64);
                let draw = (kind.draw)(&result.delta, draw_seed);
                ratios.push(fooling_ratio(
                    &params,
                    &filtered_eval,
                    &draw,
                    TauMode::Synchronized,
                )?);
                thicknesses.push(to_percent(metric_thickness(&draw), &dims));
                roughnesses.push(to_percent(metric_roughness(&draw)?, &dims));
                linfs.push(to_percent(draw.linf(), &dims));
            }
            let (mean, std) = mean_std(&ratios);
            baselines.push(BaselineStats {
                name: kind.name.to_string(),
                fooling_ratios: ratios,
                mean_fooling: mean,
                std_fooling: std,
                mean_thickness_pct: mean_std(&thicknesses).0,
                mean_roughness_pct: mean_std(&roughnesses).0,
                linf_pct: mean_std(&linfs).0,
            });
        }

        for b in &baselines {
            rows.push(ReportRow {
                attack: b.name.clone(),
                model: model_name.clone(),
                fooling_pct: b.mean_fooling * 100.0,
                fooling_std_pct: Some(b.std_fooling * 100.0),
                thickness_pct: b.mean_thickness_pct,
                roughness_pct: b.mean_roughness_pct,
                linf_pct: pct,
            });
        }
        rows.push(ReportRow {
            attack: universal_name.clone(),
            model: model_name.clone(),
            fooling_pct: eval.fooling_ratio * 100.0,
            fooling_std_pct: None,
            thickness_pct: eval.thickness_pct,
            roughness_pct: eval.roughness_pct,
            linf_pct: pct,
        });

        doc.budgets.push(SweepBudget {
            linf_pct: pct,
            universal: EvalReportDoc {
                schema: EVAL_REPORT_SCHEMA.to_string(),
                attack_name: universal_name.clone(),
                model_name: model_name.clone(),
                dims,
                linf_pct: to_percent(result.delta.linf(), &dims),
                report: eval,
            },
            baselines,
        });
    }

    ensure_out_dir(&args.out_dir)?;
    write_json(&args.out_dir.join("sweep.json"), &doc)?;
    std::fs::write(args.out_dir.join("sweep.csv"), rows_to_csv(&rows))?;
    write_json(&args.out_dir.join("plot.json"), &sweep_plot(&doc, &universal_name))?;
    println!("sweep artifacts -> {}", args.out_dir.display());
    Ok(())
}

/// Fooling-vs-budget series with a +-std band for the randomized baselines.
pub fn sweep_plot(doc: &SweepDoc, universal_name: &str) -> PlotDoc {
    let budgets: Vec<f64> = doc.budgets.iter().map(|b| b.linf_pct).collect();
    let mut series = vec![PlotSeries {
        name: universal_name.to_string(),
        x_linf_pct: budgets.clone(),
        y_fooling: doc
            .budgets
            .iter()
            .map(|b| b.universal.report.fooling_ratio)
            .collect(),
        band_std: None,
    }];
    for kind in BASELINES.iter() {
        let mut y = Vec::new();
        let mut band = Vec::new();
        for budget in &doc.budgets {
            if let Some(b) = budget.baselines.iter().find(|b| b.name == kind.name) {
                y.push(b.mean_fooling);
                band.push(b.std_fooling);
            }
        }
        if y.len() == budgets.len() {
            series.push(PlotSeries {
                name: kind.name.to_string(),
                x_linf_pct: budgets.clone(),
                y_fooling: y,
                band_std: Some(band),
            });
        }
    }
    PlotDoc {
        schema: PLOT_SCHEMA.to_string(),
        series,
    }
}
