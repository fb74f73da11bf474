use std::fs;
use std::path::Path;

use cardio_lstm::checkpoint::Checkpoint;
use cardio_lstm::dataset::{build_cumulative_series, load_cohort, write_cohort};
use cardio_lstm::tasks::{
    age_histogram, classify_eval, classify_train, forecast_extrapolate, forecast_train, pairing_table,
    ClassifierConfig, ClassifierModel, ForecastConfig, ForecasterModel, Pairing,
};
use cardio_lstm::training::TrainingConfig;
use cardio_lstm::Error;

fn fixture() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/first_rows.csv")
}

#[test]
fn fixture_survives_a_write_read_cycle() {
    let cohort = load_cohort(&fixture(), true).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("copy.csv");
    let mut buf = Vec::new();
    write_cohort(&cohort, &mut buf).unwrap();
    fs::write(&path, &buf).unwrap();
    let back = load_cohort(&path, true).unwrap();
    assert_eq!(back.records, cohort.records);
}

#[test]
fn strict_load_reports_the_row() {
    let text = fs::read_to_string(fixture()).unwrap().replace("\n55,0,7861", "\n39,0,7861");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("young.csv");
    fs::write(&path, text).unwrap();
    let err = load_cohort(&path, true).unwrap_err();
    assert!(matches!(err, Error::Range { row: 3, .. }), "{err}");
    assert_eq!(load_cohort(&path, false).unwrap().warnings.len(), 9);
}

#[test]
fn exploration_tables_cover_every_record() {
    let cohort = load_cohort(&fixture(), false).unwrap();
    for p in Pairing::ALL {
        assert_eq!(pairing_table(&cohort, p).rows.len(), cohort.len());
    }
    let bins = age_histogram(&cohort, 10.0).unwrap();
    assert_eq!(bins.iter().map(|b| b.deaths).sum::<usize>(), 8);
}

#[test]
fn saved_models_reload_and_predict_identically() {
    let cohort = load_cohort(&fixture(), false).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let cfg = ClassifierConfig {
        training: TrainingConfig {
            epochs: 10,
            ..Default::default()
        },
        ..Default::default()
    };
    let (model, _) = classify_train(&cohort, &cfg, None).unwrap();
    let path = dir.path().join("classifier.txt");
    model.to_checkpoint().save(&path).unwrap();
    let back = ClassifierModel::from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
    assert_eq!(classify_eval(&back, &cohort, 0.5).unwrap(), classify_eval(&model, &cohort, 0.5).unwrap());

    let series = build_cumulative_series(&cohort).unwrap().values();
    let mut fcfg = ForecastConfig {
        window: 4,
        train_fraction: 1.0,
        ..Default::default()
    };
    fcfg.training.epochs = 5;
    let run = forecast_train(&series, &fcfg).unwrap();
    let path = dir.path().join("forecaster.txt");
    run.forecaster.to_checkpoint().save(&path).unwrap();
    let back = ForecasterModel::from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
    assert_eq!(
        forecast_extrapolate(&back, &series, 6).unwrap(),
        forecast_extrapolate(&run.forecaster, &series, 6).unwrap()
    );
    assert!(ClassifierModel::from_checkpoint(&Checkpoint::load(&path).unwrap()).is_err());
}
