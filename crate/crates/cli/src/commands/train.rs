use super::{load_config, parse_arch};
use crate::config::resolve;
use crate::data::load_split;
use flicker_core::error::Result;
use flicker_core::io::save_checkpoint;
use flicker_core::net::train::{accuracy, train, TrainConfig};
use flicker_core::net::ArchId;
use std::path::PathBuf;

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// Dataset directory (from gen-data).
    #[arg(long)]
    pub data: PathBuf,
    /// Output checkpoint path (.flkm); an epoch log lands at <out>.log.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Architecture variant: a or b.
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(args: TrainArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let seed = resolve(args.seed, cfg.parse_value("", "seed")?, 0);
    let arch_name = args
        .arch
        .or_else(|| cfg.get("train", "arch").map(str::to_string))
        .unwrap_or_else(|| "a".to_string());
    let arch: ArchId = parse_arch(&arch_name)?;

    let train_set = load_split(&args.data, "train")?;
    let eval_set = load_split(&args.data, "eval")?;
    let num_classes = crate::data::read_manifest(&args.data)?.train.num_classes;

    let mut tc = TrainConfig::<f64>::default_desk(seed);
    tc.epochs = resolve(args.epochs, cfg.parse_value("train", "epochs")?, tc.epochs);
    tc.batch_size = resolve(
        args.batch_size,
        cfg.parse_value("train", "batch_size")?,
        tc.batch_size,
    );
    tc.learning_rate = resolve(
        args.learning_rate,
        cfg.parse_value("train", "learning_rate")?,
        tc.learning_rate,
    );

    let (params, stats) = train(&train_set, arch, num_classes, &tc)?;
    save_checkpoint(&args.out, &params)?;

    let mut log = String::from("epoch,mean_loss,train_accuracy\n");
    for s in &stats {
        log.push_str(&format!("{},{},{}\n", s.epoch, s.mean_loss, s.train_accuracy));
    }
    let log_path = PathBuf::from(format!("{}.log.csv", args.out.display()));
    std::fs::write(&log_path, log)?;

    let holdout = accuracy(&params, &eval_set)?;
    println!(
        "trained variant {:?} for {} epochs: train acc {:.3}, held-out acc {:.3}; checkpoint {}",
        arch,
        stats.len(),
        stats.last().map(|s| s.train_accuracy).unwrap_or(0.0),
        holdout,
        args.out.display()
    );
    Ok(())
}
