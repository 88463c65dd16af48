//! Versioned JSON artifact schemas and the CSV report format.
//!
//! Every artifact carries a `schema` tag (`flicker/<kind>/v1`) so `report`
//! can aggregate mixed inputs. All writers are deterministic: struct field
//! order is fixed, floats print in shortest round-trip form, and no
//! timestamps or absolute paths are embedded.

use flicker_core::attack::{AttackConfig, EvalReport, HistoryRecord, TauMode};
use flicker_core::dataset::SyntheticDatasetSpec;
use flicker_core::error::{Error, Result};
use flicker_core::ota::{ChannelEstimate, ChannelModel};
use flicker_core::video::Dims;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const DATASET_SCHEMA: &str = "flicker/dataset/v1";
pub const ATTACK_RESULT_SCHEMA: &str = "flicker/attack-result/v1";
pub const EVAL_REPORT_SCHEMA: &str = "flicker/eval-report/v1";
pub const SWEEP_SCHEMA: &str = "flicker/baseline-sweep/v1";
pub const TRANSFER_SCHEMA: &str = "flicker/transfer-matrix/v1";
pub const OTA_SCHEMA: &str = "flicker/ota-report/v1";
pub const CHANNEL_SCHEMA: &str = "flicker/channel/v1";
pub const CALIBRATION_SCHEMA: &str = "flicker/calibration/v1";
pub const PLOT_SCHEMA: &str = "flicker/plot/v1";

/// Manifest written next to a generated dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetDoc {
    pub schema: String,
    pub train: SyntheticDatasetSpec,
    pub eval: SyntheticDatasetSpec,
}

/// Attack outcome: config echo, history, and a reference to the trace file
/// written beside this document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackResultDoc {
    pub schema: String,
    pub attack_name: String,
    pub model_name: String,
    pub model_fingerprint: String,
    pub dims: Dims,
    pub config: AttackConfig<f64>,
    pub history: Vec<HistoryRecord>,
    /// File name (relative to this document) of the FLKP trace.
    pub delta_file: String,
    /// l-infinity of the final trace as percent of the intensity range.
    pub linf_pct: f64,
    /// Evaluation of the final trace on the held-out split.
    pub eval: EvalReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReportDoc {
    pub schema: String,
    pub attack_name: String,
    pub model_name: String,
    pub dims: Dims,
    pub linf_pct: f64,
    pub report: EvalReport,
}

/// Fooling ratios of one randomized baseline over its repeats.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineStats {
    pub name: String,
    pub fooling_ratios: Vec<f64>,
    pub mean_fooling: f64,
    pub std_fooling: f64,
    pub mean_thickness_pct: f64,
    pub mean_roughness_pct: f64,
    pub linf_pct: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepBudget {
    pub linf_pct: f64,
    pub universal: EvalReportDoc,
    pub baselines: Vec<BaselineStats>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepDoc {
    pub schema: String,
    pub model_name: String,
    pub dims: Dims,
    pub repeats: usize,
    pub budgets: Vec<SweepBudget>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferCell {
    pub delta_from: String,
    pub target_model: String,
    pub fooling_ratio: f64,
    pub thickness_pct: f64,
    pub roughness_pct: f64,
    pub linf_pct: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferDoc {
    pub schema: String,
    pub dims: Dims,
    pub tau_mode: TauMode,
    pub models: Vec<String>,
    pub cells: Vec<TransferCell>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OtaDoc {
    pub schema: String,
    pub attack_name: String,
    pub model_name: String,
    pub dims: Dims,
    pub channel: ChannelModel,
    pub precompensated: bool,
    pub report: EvalReport,
    pub calibration: Option<ChannelEstimate>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelDoc {
    pub schema: String,
    #[serde(flatten)]
    pub channel: ChannelModel,
}

/// One plot series: fooling ratio against the l-infinity budget, with an
/// optional +-std band.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlotSeries {
    pub name: String,
    pub x_linf_pct: Vec<f64>,
    pub y_fooling: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band_std: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlotDoc {
    pub schema: String,
    pub series: Vec<PlotSeries>,
}

/// A kind-agnostic wrapper used by `report` to sniff input files.
#[derive(Debug, Deserialize)]
pub struct SchemaProbe {
    pub schema: String,
}

/// One row of the tabular report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub attack: String,
    pub model: String,
    pub fooling_pct: f64,
    /// Present only for randomized attacks.
    pub fooling_std_pct: Option<f64>,
    pub thickness_pct: f64,
    pub roughness_pct: f64,
    pub linf_pct: f64,
}

pub const REPORT_CSV_HEADER: &str =
    "attack,model,fooling_pct,fooling_std_pct,thickness_pct,roughness_pct,linf_pct";

pub fn rows_to_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let std = r
            .fooling_std_pct
            .map(|s| format!("{}", s))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.attack, r.model, r.fooling_pct, std, r.thickness_pct, r.roughness_pct, r.linf_pct
        ));
    }
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| {
        Error::validation(format!("{}: not a valid artifact: {}", path.display(), e))
    })
}

/// Mean and sample standard deviation (n - 1 denominator; 0 for n < 2).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows_render_std_only_when_present() {
        let rows = vec![
            ReportRow {
                attack: "universal".into(),
                model: "model_a".into(),
                fooling_pct: 93.0,
                fooling_std_pct: None,
                thickness_pct: 15.5,
                roughness_pct: 15.7,
                linf_pct: 20.0,
            },
            ReportRow {
                attack: "random_uniform".into(),
                model: "model_a".into(),
                fooling_pct: 32.1,
                fooling_std_pct: Some(3.1),
                thickness_pct: 10.0,
                roughness_pct: 13.0,
                linf_pct: 20.0,
            },
        ];
        let csv = rows_to_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], REPORT_CSV_HEADER);
        assert_eq!(lines[1], "universal,model_a,93,,15.5,15.7,20");
        assert_eq!(lines[2], "random_uniform,model_a,32.1,3.1,10,13,20");
    }

    #[test]
    fn mean_std_matches_hand_values() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-12);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let (m1, s1) = mean_std(&[7.0]);
        assert_eq!((m1, s1), (7.0, 0.0));
    }
}
