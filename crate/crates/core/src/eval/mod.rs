//! Evaluation toolkit: binarization, confusion counting, accuracy/MIOU,
//! precision/recall/F sweeps (DS, IS, BP, BR) and guided-filter refinement.

mod guided;
mod metrics;

pub use guided::{box_mean, guided_filter, luma_guide};
pub use metrics::{
    accuracy_miou, binarize, confusion, dataset_best_f, default_grid, evaluate_dataset,
    image_best_f, precision_recall_f, write_report_json, write_sweep_csv, ConfusionCounts,
    GuidedParams, MetricReport, SweepResult, SweepRow, REPORT_SCHEMA_VERSION,
};

#[cfg(test)]
mod tests;
