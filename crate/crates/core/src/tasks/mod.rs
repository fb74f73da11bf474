//! Death-event classification, cumulative-trend forecasting, confusion
//! matrices and exploratory tables.

pub mod classify;
pub mod explore;
pub mod forecast;
pub mod metrics;

pub use classify::{
    classify_eval, classify_train, cross_validate, evaluate_probabilities, majority_baseline, shuffle_labels,
    ClassifierConfig, ClassifierModel, CrossValidation, Evaluation, FoldOutcome, DEFAULT_THRESHOLD,
};
pub use explore::{age_histogram, explore_export, histogram_csv, pairing_table, AgeBin, Pairing, ScatterTable};
pub use forecast::{
    all_data_table, forecast_extrapolate, forecast_train, holdout_table, make_windows, ForecastConfig, ForecastRun,
    ForecasterModel, Prediction, SeriesScale, Window, DEFAULT_HORIZON,
};
pub use metrics::ConfusionMatrix;
