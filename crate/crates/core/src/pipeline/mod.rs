//! Dataset ingestion, patient-level splitting and the batch drivers behind
//! the command-line tool.

mod dataset;
mod evaluate;
mod mc;
mod split;

pub use dataset::{
    load_dataset_index, patient_and_side, DatasetIndex, ImageRecord, CALIBRATION_FILE, CLINICAL_FILE, CONTOUR_DIR,
};
pub use evaluate::{
    evaluate_pair, prediction_path, run_evaluate, EvaluationReport, EvaluationRow, EVALUATION_HEADER,
};
pub use mc::{
    ensemble_files, run_map_uncertainty, run_uncertainty, subject_seed, MapUncertaintyReport, MapUncertaintyRow,
    Subject, SubjectUncertainty, UncertaintyReport,
};
pub use split::{patient_level_split, split_patient_ids, DatasetSplit, SplitSpec};
