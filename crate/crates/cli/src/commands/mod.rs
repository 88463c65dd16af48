//! Subcommand implementations.

pub mod attack;
pub mod baseline_sweep;
pub mod eval;
pub mod gen_data;
pub mod ota_sim;
pub mod report;
pub mod train;
pub mod transfer_matrix;

use crate::config::ExperimentConfig;
use clap::Subcommand;
use flicker_core::attack::TauMode;
use flicker_core::error::{Error, Result};
use flicker_core::net::ArchId;
use flicker_core::rng::derive_seed;
use std::path::Path;

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic motion dataset (train and eval splits).
    GenData(gen_data::GenDataArgs),
    /// Train a classifier on a dataset's train split.
    Train(train::TrainArgs),
    /// Optimize a flickering perturbation against a trained model.
    Attack(attack::AttackArgs),
    /// Evaluate a stored perturbation on a dataset's eval split.
    Eval(eval::EvalArgs),
    /// Universal attacks vs random baselines over a budget sweep.
    BaselineSweep(baseline_sweep::SweepArgs),
    /// Cross-model fooling-ratio matrix for stored perturbations.
    TransferMatrix(transfer_matrix::TransferArgs),
    /// Evaluate a perturbation through the bulb/camera channel simulator.
    OtaSim(ota_sim::OtaArgs),
    /// Aggregate result artifacts into a CSV table plus plot data.
    Report(report::ReportArgs),
}

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData(args) => gen_data::run(args),
        Command::Train(args) => train::run(args),
        Command::Attack(args) => attack::run(args),
        Command::Eval(args) => eval::run(args),
        Command::BaselineSweep(args) => baseline_sweep::run(args),
        Command::TransferMatrix(args) => transfer_matrix::run(args),
        Command::OtaSim(args) => ota_sim::run(args),
        Command::Report(args) => report::run(args),
    }
}

/// Load the optional config file named by a `--config` flag.
pub fn load_config(path: &Option<std::path::PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

pub fn parse_arch(name: &str) -> Result<ArchId> {
    match name.to_ascii_lowercase().as_str() {
        "a" => Ok(ArchId::A),
        "b" => Ok(ArchId::B),
        other => Err(Error::validation(format!(
            "unknown architecture {:?} (expected a or b)",
            other
        ))),
    }
}

/// Parse an evaluation shift mode; the random mode derives its own stream
/// from the global seed.
pub fn parse_tau_mode(name: &str, seed: u64) -> Result<TauMode> {
    match name.to_ascii_lowercase().as_str() {
        "sync" | "synchronized" => Ok(TauMode::Synchronized),
        "random" => Ok(TauMode::Random {
            seed: derive_seed(seed, 0x7461),
        }),
        "sweep" | "sweep-all" => Ok(TauMode::SweepAll),
        other => Err(Error::validation(format!(
            "unknown tau mode {:?} (expected sync, random or sweep)",
            other
        ))),
    }
}

pub fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}
