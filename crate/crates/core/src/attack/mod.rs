//! The flickering attack: losses, regularizers, objective, metrics, drivers.

pub mod driver;
pub mod metrics;
pub mod objective;
pub mod ops;

pub use driver::{
    attack, baseline_minmax, baseline_shuffle, baseline_uniform, clean_filter, self_eval,
    transfer_eval, AttackConfig, AttackMode, AttackResult, EvalReport, HistoryRecord,
};
pub use metrics::{
    fooling_per_class, fooling_per_shift, fooling_ratio, metric_roughness, metric_thickness,
    to_percent, MetricsReport, TauMode,
};
pub use objective::{objective, RegWeights};
pub use ops::{
    apply_perturbation, apply_perturbation_with_mask, margin_loss, margin_loss_dlogits,
    project_linf, roll, roll_perturbation, roughness_reg, roughness_reg_grad, temporal_diff1,
    temporal_diff2, thickness_reg, thickness_reg_grad, MarginDirection, MarginSpace, MarginSpec,
};
