use super::{ensure_out_dir, load_config, parse_tau_mode};
use crate::artifacts::{
    rows_to_csv, write_json, AttackResultDoc, ReportRow, ATTACK_RESULT_SCHEMA,
};
use crate::config::resolve;
use crate::data::{load_split, stem};
use flicker_core::attack::{
    attack, clean_filter, self_eval, AttackConfig, AttackMode, MarginDirection, MarginSpace,
    MarginSpec, RegWeights, TauMode,
};
use flicker_core::error::{Error, Result};
use flicker_core::io::{load_checkpoint, save_perturbation};
use flicker_core::scalar::cast;
use flicker_core::video::LabeledVideo;
use std::path::PathBuf;

#[derive(Debug, clap::Args)]
pub struct AttackArgs {
    /// Trained checkpoint (.flkm).
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset directory; attacks train on the clean-filtered train split.
    #[arg(long)]
    pub data: PathBuf,
    /// Attack mode: single-video, single-class or universal.
    #[arg(long)]
    pub mode: Option<String>,
    /// Output directory for delta.flkp, attack_result.json, report.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Class to attack in single-class mode.
    #[arg(long)]
    pub class_id: Option<usize>,
    /// Split the attack draws its clips from: train (default for class and
    /// universal modes) or eval (default for single-video, which plays the
    /// role of attacking unseen clips).
    #[arg(long)]
    pub split: Option<String>,
    /// Index into the filtered attack split for single-video mode.
    #[arg(long)]
    pub clip_index: Option<usize>,
    /// Train under random cyclic shifts (time-invariant perturbation).
    #[arg(long)]
    pub time_invariant: bool,
    /// l-infinity budget as percent of the intensity range.
    #[arg(long)]
    pub linf_pct: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Probability margin m.
    #[arg(long)]
    pub margin: Option<f64>,
    /// Loss space: prob (default) or logit.
    #[arg(long)]
    pub space: Option<String>,
    /// Overall regularization weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Thickness regularizer weight.
    #[arg(long)]
    pub beta1: Option<f64>,
    /// Roughness regularizer weight.
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Shift mode for the final held-out evaluation: sync, random or sweep.
    #[arg(long)]
    pub tau_mode: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn parse_mode(name: &str, class_id: Option<usize>) -> Result<AttackMode> {
    match name.to_ascii_lowercase().as_str() {
        "single-video" | "single_video" => Ok(AttackMode::SingleVideo),
        "single-class" | "single_class" => {
            let class = class_id.ok_or_else(|| {
                Error::validation("single-class mode needs --class-id".to_string())
            })?;
            Ok(AttackMode::SingleClass { class })
        }
        "universal" => Ok(AttackMode::Universal),
        other => Err(Error::validation(format!(
            "unknown attack mode {:?} (expected single-video, single-class or universal)",
            other
        ))),
    }
}

pub fn parse_space(name: &str) -> Result<MarginSpace> {
    match name.to_ascii_lowercase().as_str() {
        "prob" | "probability" => Ok(MarginSpace::Probability),
        "logit" => Ok(MarginSpace::LogitWithProbabilityMargin),
        other => Err(Error::validation(format!(
            "unknown margin space {:?} (expected prob or logit)",
            other
        ))),
    }
}

/// Human-readable attack label used in artifacts and report rows.
pub fn attack_name(mode: AttackMode, time_invariant: bool) -> String {
    let base = match mode {
        AttackMode::SingleVideo => "single_video".to_string(),
        AttackMode::SingleClass { class } => format!("single_class_{}", class),
        AttackMode::Universal => "universal".to_string(),
    };
    if time_invariant {
        format!("{}_time_invariant", base)
    } else {
        base
    }
}

pub fn run(args: AttackArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let seed = resolve(args.seed, cfg.parse_value("", "seed")?, 0);
    let mode_name = args
        .mode
        .or_else(|| cfg.get("attack", "mode").map(str::to_string))
        .unwrap_or_else(|| "universal".to_string());
    let class_id = args.class_id.or(cfg.parse_value("attack", "class_id")?);
    let mode = parse_mode(&mode_name, class_id)?;
    let time_invariant =
        args.time_invariant || cfg.parse_value("attack", "time_invariant")?.unwrap_or(false);

    let params = load_checkpoint::<f64>(&args.model, None)?;
    let split = match &args.split {
        Some(name) => match name.as_str() {
            "train" | "eval" => name.clone(),
            other => {
                return Err(Error::validation(format!(
                    "unknown split {:?} (expected train or eval)",
                    other
                )))
            }
        },
        None => match mode {
            AttackMode::SingleVideo => "eval".to_string(),
            _ => "train".to_string(),
        },
    };
    let attack_split = load_split(&args.data, &split)?;
    let eval_set = load_split(&args.data, "eval")?;
    let (filtered_attack, kept_attack, total_attack) = clean_filter(&params, &attack_split)?;
    let (filtered_eval, kept_eval, total_eval) = clean_filter(&params, &eval_set)?;
    println!(
        "clean filter: {} {}/{}, eval {}/{}",
        split, kept_attack, total_attack, kept_eval, total_eval
    );

    let attack_data: Vec<LabeledVideo<f64>> = match mode {
        AttackMode::SingleVideo => {
            let idx = resolve(args.clip_index, cfg.parse_value("attack", "clip_index")?, 0);
            let clip = filtered_attack.get(idx).ok_or_else(|| {
                Error::validation(format!(
                    "clip index {} out of range ({} filtered clips)",
                    idx,
                    filtered_attack.len()
                ))
            })?;
            vec![clip.clone()]
        }
        AttackMode::SingleClass { class } => {
            let subset: Vec<LabeledVideo<f64>> = filtered_attack
                .iter()
                .filter(|lv| lv.label == class)
                .cloned()
                .collect();
            if subset.is_empty() {
                return Err(Error::validation(format!(
                    "no correctly-classified clips of class {}",
                    class
                )));
            }
            subset
        }
        AttackMode::Universal => filtered_attack.clone(),
    };

    let mut ac: AttackConfig<f64> = AttackConfig::default_for(mode, seed);
    ac.time_invariant = time_invariant;
    ac.iterations = resolve(
        args.iterations,
        cfg.parse_value("attack", "iterations")?,
        ac.iterations,
    );
    ac.batch_size = resolve(
        args.batch_size,
        cfg.parse_value("attack", "batch_size")?,
        ac.batch_size,
    );
    ac.learning_rate = resolve(
        args.learning_rate,
        cfg.parse_value("attack", "learning_rate")?,
        ac.learning_rate,
    );
    ac.eval_every = resolve(
        args.eval_every,
        cfg.parse_value("attack", "eval_every")?,
        ac.eval_every,
    );
    let margin = resolve(args.margin, cfg.parse_value("attack", "margin")?, 0.05);
    let space_name = args
        .space
        .or_else(|| cfg.get("attack", "space").map(str::to_string))
        .unwrap_or_else(|| "prob".to_string());
    ac.margin = MarginSpec {
        m: margin,
        space: parse_space(&space_name)?,
        direction: MarginDirection::Untargeted { original: 0 },
    };
    ac.weights = RegWeights {
        lambda: resolve(args.lambda, cfg.parse_value("attack", "lambda")?, 1.0),
        beta1: resolve(args.beta1, cfg.parse_value("attack", "beta1")?, 0.5),
        beta2: resolve(args.beta2, cfg.parse_value("attack", "beta2")?, 0.5),
    };
    let dims = *attack_data[0].video.dims();
    let linf_pct = args.linf_pct.or(cfg.parse_value("attack", "linf_pct")?);
    if let Some(pct) = linf_pct {
        if !(pct > 0.0) {
            return Err(Error::validation(format!(
                "--linf-pct must be > 0, got {}",
                pct
            )));
        }
        ac.zeta = Some(cast::<f64>(pct / 100.0 * dims.range()));
    }

    let result = attack(&params, &attack_data, &ac)?;

    // final evaluation: the attacked clip itself in single-video mode, the
    // held-out split otherwise
    let tau = match &args.tau_mode {
        Some(name) => parse_tau_mode(name, seed)?,
        None => TauMode::Synchronized,
    };
    let eval_data: &[LabeledVideo<f64>] = match mode {
        AttackMode::SingleVideo => &attack_data,
        _ => &filtered_eval,
    };
    let eval = self_eval(&params, &result.delta, eval_data, tau)?;

    ensure_out_dir(&args.out_dir)?;
    let delta_file = "delta.flkp";
    save_perturbation(&args.out_dir.join(delta_file), &result.delta)?;

    let name = attack_name(mode, time_invariant);
    let model_name = stem(&args.model);
    let linf_pct_final =
        result.delta.linf() / dims.range() * 100.0;
    let doc = AttackResultDoc {
        schema: ATTACK_RESULT_SCHEMA.to_string(),
        attack_name: name.clone(),
        model_name: model_name.clone(),
        model_fingerprint: result.model_fingerprint.clone(),
        dims,
        config: result.config,
        history: result.history.clone(),
        delta_file: delta_file.to_string(),
        linf_pct: linf_pct_final,
        eval: eval.clone(),
    };
    write_json(&args.out_dir.join("attack_result.json"), &doc)?;

    let row = ReportRow {
        attack: name.clone(),
        model: model_name,
        fooling_pct: eval.fooling_ratio * 100.0,
        fooling_std_pct: None,
        thickness_pct: eval.thickness_pct,
        roughness_pct: eval.roughness_pct,
        linf_pct: linf_pct_final,
    };
    std::fs::write(args.out_dir.join("report.csv"), rows_to_csv(&[row]))?;

    println!(
        "{}: fooling {:.3} thickness {:.2}% roughness {:.2}% linf {:.2}% -> {}",
        name,
        eval.fooling_ratio,
        eval.thickness_pct,
        eval.roughness_pct,
        linf_pct_final,
        args.out_dir.display()
    );
    Ok(())
}
