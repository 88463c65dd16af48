use super::load_config;
use crate::config::resolve;
use crate::data::write_dataset;
use flicker_core::dataset::SyntheticDatasetSpec;
use flicker_core::error::Result;
use flicker_core::rng::derive_seed;
use flicker_core::video::Dims;
use std::path::PathBuf;

#[derive(Debug, clap::Args)]
pub struct GenDataArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Experiment config supplying defaults for omitted flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of motion classes (2..=8).
    #[arg(long)]
    pub classes: Option<usize>,
    /// Training clips per class.
    #[arg(long)]
    pub clips_per_class: Option<usize>,
    /// Evaluation clips per class.
    #[arg(long)]
    pub eval_clips_per_class: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub v_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub v_max: Option<f64>,
    /// Per-pixel Gaussian noise std-dev.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Global seed; the two split seeds derive from it.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(args: GenDataArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let seed = resolve(args.seed, cfg.parse_value("", "seed")?, 0);
    let dims = Dims::new(
        resolve(args.frames, cfg.parse_value("dataset", "frames")?, 16),
        resolve(args.height, cfg.parse_value("dataset", "height")?, 32),
        resolve(args.width, cfg.parse_value("dataset", "width")?, 32),
        resolve(args.v_min, cfg.parse_value("dataset", "v_min")?, -1.0),
        resolve(args.v_max, cfg.parse_value("dataset", "v_max")?, 1.0),
    )?;
    let num_classes = resolve(args.classes, cfg.parse_value("dataset", "classes")?, 6);
    let noise_sigma = resolve(
        args.noise_sigma,
        cfg.parse_value("dataset", "noise_sigma")?,
        0.02,
    );
    let train = SyntheticDatasetSpec {
        dims,
        num_classes,
        clips_per_class: resolve(
            args.clips_per_class,
            cfg.parse_value("dataset", "clips_per_class")?,
            20,
        ),
        noise_sigma,
        seed: derive_seed(seed, 1),
    };
    let eval = SyntheticDatasetSpec {
        clips_per_class: resolve(
            args.eval_clips_per_class,
            cfg.parse_value("dataset", "eval_clips_per_class")?,
            10,
        ),
        seed: derive_seed(seed, 2),
        ..train
    };
    let (n_train, n_eval) = write_dataset(&args.out, &train, &eval)?;
    println!(
        "wrote {} train + {} eval clips ({} classes, {}x{}x{}) to {}",
        n_train,
        n_eval,
        num_classes,
        dims.t,
        dims.h,
        dims.w,
        args.out.display()
    );
    Ok(())
}
