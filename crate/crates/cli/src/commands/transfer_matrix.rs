use super::{ensure_out_dir, load_config, parse_tau_mode};
use crate::artifacts::{write_json, TransferCell, TransferDoc, TRANSFER_SCHEMA};
use crate::config::resolve;
use crate::data::{load_split, stem};
use flicker_core::attack::{clean_filter, transfer_eval, to_percent};
use flicker_core::error::{Error, Result};
use flicker_core::io::{load_checkpoint, load_perturbation};
use std::path::PathBuf;

#[derive(Debug, clap::Args)]
pub struct TransferArgs {
    /// Comma-separated checkpoint paths; names come from the file stems.
    #[arg(long)]
    pub models: String,
    /// Comma-separated perturbation paths, one per model, same order.
    #[arg(long)]
    pub deltas: String,
    #[arg(long)]
    pub data: PathBuf,
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

pub fn run(args: TransferArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let seed = resolve(args.seed, cfg.parse_value("", "seed")?, 0);
    let tau = parse_tau_mode(args.tau_mode.as_deref().unwrap_or("sync"), seed)?;
    let model_paths: Vec<PathBuf> = args.models.split(',').map(PathBuf::from).collect();
    let delta_paths: Vec<PathBuf> = args.deltas.split(',').map(PathBuf::from).collect();
    if model_paths.len() != delta_paths.len() || model_paths.len() < 2 {
        return Err(Error::validation(format!(
            "need matching lists of >= 2 models and deltas, got {} and {}",
            model_paths.len(),
            delta_paths.len()
        )));
    }

    let models: Vec<_> = model_paths
        .iter()
        .map(|p| load_checkpoint::<f64>(p, None))
        .collect::<Result<_>>()?;
    let deltas: Vec<_> = delta_paths
        .iter()
        .map(|p| load_perturbation::<f64>(p))
        .collect::<Result<_>>()?;
    let names: Vec<String> = model_paths.iter().map(|p| stem(p)).collect();
    let eval_set = load_split(&args.data, "eval")?;

    let dims = *deltas[0].dims();
    let mut cells = Vec::new();
    for (ti, target) in models.iter().enumerate() {
        let (filtered, kept, total) = clean_filter(target, &eval_set)?;
        println!("{}: clean filter eval {}/{}", names[ti], kept, total);
        if filtered.is_empty() {
            return Err(Error::validation(format!(
                "model {} classifies no eval clip correctly",
                names[ti]
            )));
        }
        for (si, delta) in deltas.iter().enumerate() {
            let report = transfer_eval(delta, target, &filtered, tau)?;
            cells.push(TransferCell {
                delta_from: names[si].clone(),
                target_model: names[ti].clone(),
                fooling_ratio: report.fooling_ratio,
                thickness_pct: report.thickness_pct,
                roughness_pct: report.roughness_pct,
                linf_pct: to_percent(delta.linf(), delta.dims()),
            });
        }
    }

    let doc = TransferDoc {
        schema: TRANSFER_SCHEMA.to_string(),
        dims,
        tau_mode: tau,
        models: names.clone(),
        cells,
    };
    ensure_out_dir(&args.out_dir)?;
    write_json(&args.out_dir.join("transfer.json"), &doc)?;

    // grid CSV: rows = trace source, columns = target model
    let mut csv = String::from("delta_from\\target");
    for name in &names {
        csv.push(',');
        csv.push_str(name);
    }
    csv.push('\n');
    for source in &names {
        csv.push_str(source);
        for target in &names {
            let cell = doc
                .cells
                .iter()
                .find(|c| &c.delta_from == source && &c.target_model == target)
                .expect("full grid");
            csv.push_str(&format!(",{}", cell.fooling_ratio));
        }
        csv.push('\n');
    }
    std::fs::write(args.out_dir.join("matrix.csv"), csv)?;
    println!("transfer matrix -> {}", args.out_dir.display());
    Ok(())
}
