//! Evaluate a stored perturbation through the bulb/camera channel
//! simulator, optionally with chromatic precompensation from a synthetic
//! calibration pass.

use super::{ensure_out_dir, load_config};
use crate::artifacts::{
    read_json, rows_to_csv, write_json, ChannelDoc, OtaDoc, ReportRow, CALIBRATION_SCHEMA,
    CHANNEL_SCHEMA, OTA_SCHEMA,
};
use crate::config::resolve;
use crate::data::{load_split, stem};
use flicker_core::attack::{clean_filter, metric_roughness, metric_thickness, to_percent, TauMode};
use flicker_core::error::{Error, Result};
use flicker_core::io::{load_checkpoint, load_perturbation};
use flicker_core::net::forward;
use flicker_core::ota::{
    calibrate, channel_offsets, precompensate, transmit, CalibrationRecord, ChannelEstimate,
    ChannelModel,
};
use flicker_core::rng::derive_seed;
use flicker_core::video::Perturbation;
use serde::Serialize;
use std::path::PathBuf;

#[derive(Debug, clap::Args)]
pub struct OtaArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Perturbation to transmit (.flkp).
    #[arg(long)]
    pub delta: PathBuf,
    /// Channel description JSON; omitted = [channel] config or identity.
    #[arg(long)]
    pub channel: Option<PathBuf>,
    /// Invert the calibrated chromatic map before transmitting.
    #[arg(long)]
    pub precompensate: bool,
    /// Also write calibration records (CSV) and the recovered channel.
    #[arg(long)]
    pub emit_calibration: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn channel_from_config(cfg: &crate::config::ExperimentConfig) -> Result<Option<ChannelModel>> {
    let any = ["crosstalk", "rise_alpha", "phase", "ambient", "noise_sigma"]
        .iter()
        .any(|k| cfg.get("channel", k).is_some());
    if !any {
        return Ok(None);
    }
    let mut ch = ChannelModel::identity();
    if let Some(list) = cfg.parse_list::<f64>("channel", "crosstalk")? {
        if list.len() != 9 {
            return Err(Error::validation(format!(
                "channel crosstalk needs 9 entries, got {}",
                list.len()
            )));
        }
        ch.crosstalk.copy_from_slice(&list);
    }
    if let Some(a) = cfg.parse_value("channel", "rise_alpha")? {
        ch.rise_alpha = a;
    }
    if let Some(p) = cfg.parse_value("channel", "phase")? {
        ch.phase = p;
    }
    if let Some(list) = cfg.parse_list::<f64>("channel", "ambient")? {
        if list.len() != 3 {
            return Err(Error::validation(format!(
                "channel ambient needs 3 entries, got {}",
                list.len()
            )));
        }
        ch.ambient.copy_from_slice(&list);
    }
    if let Some(s) = cfg.parse_value("channel", "noise_sigma")? {
        ch.noise_sigma = s;
    }
    Ok(Some(ch))
}

/// Single-channel pulse probes through the channel's noise-free stage; the
/// per-pixel sensor noise averages out over a frame, so the observed trace
/// is read from the effective offsets.
pub fn synthesize_probes(ch: &ChannelModel, frames: usize, amplitude: f64) -> Result<Vec<CalibrationRecord>> {
    let dims = flicker_core::video::Dims::new(frames.max(4), 1, 1, -1.0, 1.0)?;
    let mut records = Vec::new();
    for c in 0..3 {
        let mut trace = vec![0.0_f64; dims.trace_len()];
        trace[c] = amplitude;
        trace[(dims.t / 2) * 3 + c] = -amplitude * 0.5;
        let sent: Vec<[f64; 3]> = (0..dims.t)
            .map(|t| [trace[t * 3], trace[t * 3 + 1], trace[t * 3 + 2]])
            .collect();
        let pert = Perturbation::new(dims, trace)?;
        let aligned = ChannelModel { phase: 0, ..*ch };
        let observed = channel_offsets(&pert, &aligned)?;
        records.push(CalibrationRecord { sent, observed });
    }
    Ok(records)
}

pub fn calibration_csv(records: &[CalibrationRecord]) -> String {
    let mut csv =
        String::from("record,frame,sent_r,sent_g,sent_b,observed_r,observed_g,observed_b\n");
    for (ri, rec) in records.iter().enumerate() {
        for (f, (s, o)) in rec.sent.iter().zip(&rec.observed).enumerate() {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                ri, f, s[0], s[1], s[2], o[0], o[1], o[2]
            ));
        }
    }
    csv
}

#[derive(Serialize)]
struct CalibrationDoc {
    schema: String,
    estimate: ChannelEstimate,
}

pub fn run(args: OtaArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let seed = resolve(args.seed, cfg.parse_value("", "seed")?, 0);
    let channel = match &args.channel {
        Some(path) => {
            let doc: ChannelDoc = read_json(path)?;
            if doc.schema != CHANNEL_SCHEMA {
                return Err(Error::validation(format!(
                    "{}: unexpected schema {:?}",
                    path.display(),
                    doc.schema
                )));
            }
            doc.channel
        }
        None => channel_from_config(&cfg)?.unwrap_or_else(ChannelModel::identity),
    };
    channel.validate()?;

    let params = load_checkpoint::<f64>(&args.model, None)?;
    let delta = load_perturbation::<f64>(&args.delta)?;
    let eval_set = load_split(&args.data, "eval")?;
    let (filtered, kept, total) = clean_filter(&params, &eval_set)?;
    println!("clean filter: eval {}/{}", kept, total);
    if filtered.is_empty() {
        return Err(Error::validation("clean filter left no clips".to_string()));
    }

    ensure_out_dir(&args.out_dir)?;
    let mut calibration = None;
    if args.precompensate || args.emit_calibration {
        let records = synthesize_probes(&channel, delta.dims().t, 0.5)?;
        let estimate = calibrate(&records)?;
        if args.emit_calibration {
            std::fs::write(args.out_dir.join("calibration.csv"), calibration_csv(&records))?;
            write_json(
                &args.out_dir.join("calibrated.json"),
                &CalibrationDoc {
                    schema: CALIBRATION_SCHEMA.to_string(),
                    estimate,
                },
            )?;
        }
        calibration = Some(estimate);
    }
    let commanded = if args.precompensate {
        let est = calibration.as_ref().expect("calibration ran");
        precompensate(&delta, &est.crosstalk)?
    } else {
        delta.clone()
    };

    use rayon::prelude::*;
    let hits: Vec<Result<bool>> = filtered
        .par_iter()
        .enumerate()
        .map(|(i, lv)| {
            let received = transmit(&lv.video, &commanded, &channel, derive_seed(seed, i as u64))?;
            Ok(forward(&params, &received)?.top_class != lv.label)
        })
        .collect();
    let mut fooled = 0usize;
    let mut per_class: Vec<(usize, usize, usize)> =
        (0..params.num_classes).map(|k| (k, 0, 0)).collect();
    for (lv, hit) in filtered.iter().zip(hits) {
        per_class[lv.label].2 += 1;
        if hit? {
            fooled += 1;
            per_class[lv.label].1 += 1;
        }
    }

    let dims = delta.dims();
    let report = flicker_core::attack::EvalReport {
        fooling_ratio: fooled as f64 / filtered.len() as f64,
        thickness_pct: to_percent(metric_thickness(&delta), dims),
        roughness_pct: to_percent(metric_roughness(&delta)?, dims),
        tau_mode: TauMode::Synchronized,
        eval_size: filtered.len(),
        per_class,
    };
    let attack_label = format!("ota_{}", stem(&args.delta));
    let doc = OtaDoc {
        schema: OTA_SCHEMA.to_string(),
        attack_name: attack_label.clone(),
        model_name: stem(&args.model),
        dims: *dims,
        channel,
        precompensated: args.precompensate,
        report: report.clone(),
        calibration,
    };
    write_json(&args.out_dir.join("ota_report.json"), &doc)?;
    let row = ReportRow {
        attack: attack_label,
        model: doc.model_name.clone(),
        fooling_pct: report.fooling_ratio * 100.0,
        fooling_std_pct: None,
        thickness_pct: report.thickness_pct,
        roughness_pct: report.roughness_pct,
        linf_pct: to_percent(delta.linf(), dims),
    };
    std::fs::write(args.out_dir.join("report.csv"), rows_to_csv(&[row]))?;
    println!(
        "through-channel fooling {:.3} over {} clips -> {}",
        report.fooling_ratio,
        report.eval_size,
        args.out_dir.display()
    );
    Ok(())
}
