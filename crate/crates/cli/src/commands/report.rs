//! Aggregate result artifacts into one CSV table plus plot-ready JSON.

use super::{ensure_out_dir, load_config};
use crate::artifacts::{
    read_json, rows_to_csv, write_json, AttackResultDoc, EvalReportDoc, OtaDoc, PlotDoc,
    PlotSeries, ReportRow, SchemaProbe, SweepDoc, TransferDoc, ATTACK_RESULT_SCHEMA,
    EVAL_REPORT_SCHEMA, OTA_SCHEMA, PLOT_SCHEMA, SWEEP_SCHEMA, TRANSFER_SCHEMA,
};
use flicker_core::error::{Error, Result};
use flicker_core::video::Dims;
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    Single,
    Class,
    Universal,
    TimeInvariant,
    Baseline,
    Transfer,
}

fn parse_kind(name: &str) -> Result<TableKind> {
    Ok(match name.to_ascii_lowercase().as_str() {
        "single" => TableKind::Single,
        "class" => TableKind::Class,
        "universal" => TableKind::Universal,
        "time-invariant" | "time_invariant" => TableKind::TimeInvariant,
        "baseline" => TableKind::Baseline,
        "transfer" => TableKind::Transfer,
        other => {
            return Err(Error::validation(format!(
                "unknown table kind {:?} (expected single, class, universal, \
                 time-invariant, baseline or transfer)",
                other
            )))
        }
    })
}

#[derive(Debug, clap::Args)]
pub struct ReportArgs {
    /// Table kind: single, class, universal, time-invariant, baseline,
    /// transfer.
    #[arg(long)]
    pub kind: String,
    /// Comma-separated input artifact JSON paths.
    #[arg(long)]
    pub inputs: String,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Rows plus the dims they were measured at, for cross-input validation.
fn rows_from_artifact(path: &PathBuf, kind: TableKind) -> Result<(Dims, Vec<ReportRow>)> {
    let probe: SchemaProbe = read_json(path)?;
    match probe.schema.as_str() {
        ATTACK_RESULT_SCHEMA => {
            let doc: AttackResultDoc = read_json(path)?;
            Ok((
                doc.dims,
                vec![ReportRow {
                    attack: doc.attack_name,
                    model: doc.model_name,
                    fooling_pct: doc.eval.fooling_ratio * 100.0,
                    fooling_std_pct: None,
                    thickness_pct: doc.eval.thickness_pct,
                    roughness_pct: doc.eval.roughness_pct,
                    linf_pct: doc.linf_pct,
                }],
            ))
        }
        EVAL_REPORT_SCHEMA => {
            let doc: EvalReportDoc = read_json(path)?;
            Ok((
                doc.dims,
                vec![ReportRow {
                    attack: doc.attack_name,
                    model: doc.model_name,
                    fooling_pct: doc.report.fooling_ratio * 100.0,
                    fooling_std_pct: None,
                    thickness_pct: doc.report.thickness_pct,
                    roughness_pct: doc.report.roughness_pct,
                    linf_pct: doc.linf_pct,
                }],
            ))
        }
        OTA_SCHEMA => {
            let doc: OtaDoc = read_json(path)?;
            Ok((
                doc.dims,
                vec![ReportRow {
                    attack: doc.attack_name,
                    model: doc.model_name,
                    fooling_pct: doc.report.fooling_ratio * 100.0,
                    fooling_std_pct: None,
                    thickness_pct: doc.report.thickness_pct,
                    roughness_pct: doc.report.roughness_pct,
                    linf_pct: 0.0,
                }],
            ))
        }
        SWEEP_SCHEMA => {
            let doc: SweepDoc = read_json(path)?;
            let mut rows = Vec::new();
            for budget in &doc.budgets {
                for b in &budget.baselines {
                    rows.push(ReportRow {
                        attack: b.name.clone(),
                        model: doc.model_name.clone(),
                        fooling_pct: b.mean_fooling * 100.0,
                        fooling_std_pct: Some(b.std_fooling * 100.0),
                        thickness_pct: b.mean_thickness_pct,
                        roughness_pct: b.mean_roughness_pct,
                        linf_pct: budget.linf_pct,
                    });
                }
                rows.push(ReportRow {
                    attack: budget.universal.attack_name.clone(),
                    model: doc.model_name.clone(),
                    fooling_pct: budget.universal.report.fooling_ratio * 100.0,
                    fooling_std_pct: None,
                    thickness_pct: budget.universal.report.thickness_pct,
                    roughness_pct: budget.universal.report.roughness_pct,
                    linf_pct: budget.linf_pct,
                });
            }
            Ok((doc.dims, rows))
        }
        TRANSFER_SCHEMA => {
            if kind != TableKind::Transfer {
                return Err(Error::validation(format!(
                    "{}: transfer matrices only aggregate under --kind transfer",
                    path.display()
                )));
            }
            let doc: TransferDoc = read_json(path)?;
            let rows = doc
                .cells
                .iter()
                .map(|c| ReportRow {
                    attack: if c.delta_from == c.target_model {
                        c.delta_from.clone()
                    } else {
                        format!("{}_trns", c.delta_from)
                    },
                    model: c.target_model.clone(),
                    fooling_pct: c.fooling_ratio * 100.0,
                    fooling_std_pct: None,
                    thickness_pct: c.thickness_pct,
                    roughness_pct: c.roughness_pct,
                    linf_pct: c.linf_pct,
                })
                .collect();
            Ok((doc.dims, rows))
        }
        other => Err(Error::validation(format!(
            "{}: unsupported artifact schema {:?}",
            path.display(),
            other
        ))),
    }
}

/// Fooling-vs-budget series grouped by attack name; bands appear when every
/// point of a series carries a std.
fn plot_from_rows(rows: &[ReportRow]) -> PlotDoc {
    let mut groups: BTreeMap<String, Vec<&ReportRow>> = BTreeMap::new();
    for row in rows {
        groups.entry(row.attack.clone()).or_default().push(row);
    }
    let mut series = Vec::new();
    for (name, mut group) in groups {
        group.sort_by(|a, b| a.linf_pct.total_cmp(&b.linf_pct));
        let all_std = group.iter().all(|r| r.fooling_std_pct.is_some());
        series.push(PlotSeries {
            name,
            x_linf_pct: group.iter().map(|r| r.linf_pct).collect(),
            y_fooling: group.iter().map(|r| r.fooling_pct / 100.0).collect(),
            band_std: if all_std {
                Some(
                    group
                        .iter()
                        .map(|r| r.fooling_std_pct.unwrap() / 100.0)
                        .collect(),
                )
            } else {
                None
            },
        });
    }
    PlotDoc {
        schema: PLOT_SCHEMA.to_string(),
        series,
    }
}

pub fn run(args: ReportArgs) -> Result<()> {
    let _cfg = load_config(&args.config)?;
    let kind = parse_kind(&args.kind)?;
    let paths: Vec<PathBuf> = args.inputs.split(',').map(PathBuf::from).collect();
    if paths.is_empty() {
        return Err(Error::validation("no input artifacts".to_string()));
    }
    let mut rows = Vec::new();
    let mut dims: Option<Dims> = None;
    for path in &paths {
        let (d, mut r) = rows_from_artifact(path, kind)?;
        match dims {
            None => dims = Some(d),
            Some(prev) if prev == d => {}
            Some(prev) => {
                return Err(Error::validation(format!(
                    "{}: mixed dims across inputs ({}x{}x{} vs {}x{}x{})",
                    path.display(),
                    d.t,
                    d.h,
                    d.w,
                    prev.t,
                    prev.h,
                    prev.w
                )))
            }
        }
        rows.append(&mut r);
    }
    ensure_out_dir(&args.out_dir)?;
    std::fs::write(args.out_dir.join("report.csv"), rows_to_csv(&rows))?;
    write_json(&args.out_dir.join("plot.json"), &plot_from_rows(&rows))?;
    println!(
        "{} rows from {} artifacts -> {}",
        rows.len(),
        paths.len(),
        args.out_dir.display()
    );
    Ok(())
}
