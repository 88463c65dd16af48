use super::{ensure_out_dir, load_config, parse_tau_mode};
use crate::artifacts::{rows_to_csv, write_json, EvalReportDoc, ReportRow, EVAL_REPORT_SCHEMA};
use crate::config::resolve;
use crate::data::{load_split, stem};
use flicker_core::attack::{clean_filter, self_eval, to_percent};
use flicker_core::error::Result;
use flicker_core::io::{load_checkpoint, load_perturbation};
use std::path::PathBuf;

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Stored perturbation (.flkp).
    #[arg(long)]
    pub delta: PathBuf,
    /// Shift mode: sync (default), random or sweep.
    #[arg(long)]
    pub tau_mode: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn run(args: EvalArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let seed = resolve(args.seed, cfg.parse_value("", "seed")?, 0);
    let tau = parse_tau_mode(args.tau_mode.as_deref().unwrap_or("sync"), seed)?;

    let params = load_checkpoint::<f64>(&args.model, None)?;
    let delta = load_perturbation::<f64>(&args.delta)?;
    let eval_set = load_split(&args.data, "eval")?;
    let (filtered, kept, total) = clean_filter(&params, &eval_set)?;
    println!("clean filter: eval {}/{}", kept, total);

    let report = self_eval(&params, &delta, &filtered, tau)?;
    let doc = EvalReportDoc {
        schema: EVAL_REPORT_SCHEMA.to_string(),
        attack_name: stem(&args.delta),
        model_name: stem(&args.model),
        dims: *delta.dims(),
        linf_pct: to_percent(delta.linf(), delta.dims()),
        report: report.clone(),
    };
    ensure_out_dir(&args.out_dir)?;
    write_json(&args.out_dir.join("eval_report.json"), &doc)?;
    let row = ReportRow {
        attack: doc.attack_name.clone(),
        model: doc.model_name.clone(),
        fooling_pct: report.fooling_ratio * 100.0,
        fooling_std_pct: None,
        thickness_pct: report.thickness_pct,
        roughness_pct: report.roughness_pct,
        linf_pct: doc.linf_pct,
    };
    std::fs::write(args.out_dir.join("report.csv"), rows_to_csv(&[row]))?;
    println!(
        "fooling {:.3} over {} clips -> {}",
        report.fooling_ratio,
        report.eval_size,
        args.out_dir.display()
    );
    Ok(())
}
