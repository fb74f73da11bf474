use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cardio_lstm::checkpoint::Checkpoint;
use cardio_lstm::dataset::{build_cumulative_series, cohort_stats, load_cohort, split, Cohort, Feature};
use cardio_lstm::lstm::{GradCheckOptions, GradCheckProblem, InjectedFault, TENSOR_NAMES};
use cardio_lstm::tasks::{
    age_histogram, all_data_table, classify_eval, classify_train, cross_validate, evaluate_probabilities,
    forecast_extrapolate, forecast_train, histogram_csv, holdout_table, majority_baseline, pairing_table,
    ClassifierConfig, ClassifierModel, Evaluation, ForecastConfig, Pairing, DEFAULT_HORIZON,
};
use cardio_lstm::training::{LossKind, TrainingConfig};
use cardio_lstm::Parallelism;

use crate::run_dir::RunDir;
use crate::{Failure, EXIT_DATA};

/// LSTM pipeline for the heart-failure clinical records cohort.
#[derive(Debug, Parser)]
#[command(name = "cardio-lstm", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check every value against its documented interval and print cohort aggregates.
    Validate(ValidateArgs),
    /// Write scatter tables for the exploratory pairings and the age histogram.
    Explore(ExploreArgs),
    /// Train the death-event classifier on a split, or cross-validate with --folds.
    TrainClassifier(TrainClassifierArgs),
    /// Evaluate a saved classifier on a cohort.
    EvalClassifier(EvalClassifierArgs),
    /// Forecast the cumulative death-event series.
    Forecast(ForecastArgs),
    /// Compare analytic LSTM gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct InputArgs {
    /// Cohort CSV file.
    #[arg(long)]
    pub input: PathBuf,
    /// Reject out-of-interval values instead of warning.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainingArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Run every data-parallel loop on one thread.
    #[arg(long)]
    pub sequential: bool,
}

impl TrainingArgs {
    fn config(&self, loss: LossKind) -> TrainingConfig {
        TrainingConfig {
            epochs: self.epochs,
            learning_rate: self.lr,
            batch_size: self.batch_size,
            seed: self.seed,
            loss,
            parallelism: parallelism(self.sequential),
            ..Default::default()
        }
    }
}

fn parallelism(sequential: bool) -> Parallelism {
    if sequential {
        Parallelism::Sequential
    } else {
        Parallelism::Parallel
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    /// Cohort CSV file.
    #[arg(long)]
    pub input: PathBuf,
    /// Also write the report and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ExploreArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Pairing to export; repeat for several. Defaults to all of them.
    #[arg(long = "pairing")]
    pub pairings: Vec<String>,
    /// Age histogram bin width in years.
    #[arg(long, default_value_t = 10.0)]
    pub bin_width: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainClassifierArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[arg(long, default_value_t = 16)]
    pub hidden_dim: usize,
    /// Share of each outcome class held out for testing.
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Include follow-up time among the model inputs.
    #[arg(long)]
    pub time_as_feature: bool,
    /// Stratified k-fold cross-validation instead of a single split.
    #[arg(long)]
    pub folds: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalClassifierArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Classifier checkpoint written by train-classifier.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForecastMode {
    /// Train on the leading windows and predict the held-out tail.
    Holdout,
    /// Train on every window and extrapolate past the last day.
    AllData,
}

#[derive(Debug, Args, Serialize)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[arg(long, value_enum, default_value_t = ForecastMode::Holdout)]
    pub mode: ForecastMode,
    #[arg(long, default_value_t = 32)]
    pub hidden_dim: usize,
    #[arg(long, default_value_t = 10)]
    pub window: usize,
    /// Days to extrapolate in all-data mode.
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    pub horizon: usize,
    /// Share of windows used for training. Defaults to 0.67 in holdout mode
    /// and 1 in all-data mode.
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub hidden_dim: usize,
    #[arg(long, default_value_t = 3)]
    pub input_dim: usize,
    #[arg(long, default_value_t = 5)]
    pub steps: usize,
    /// Also write the report and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Double the analytic gradient of this tensor before comparing.
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate(a) => validate(&a),
        Command::Explore(a) => explore(&a),
        Command::TrainClassifier(a) => train_classifier(&a),
        Command::EvalClassifier(a) => eval_classifier(&a),
        Command::Forecast(a) => forecast(&a),
        Command::Gradcheck(a) => gradcheck(&a),
    }
}

/// One line for the platelet counts, which are routinely outside their
/// documented interval because of a unit mismatch.
fn platelet_note(cohort: &Cohort) -> Option<String> {
    let n = cohort.warnings.iter().filter(|w| w.feature == Feature::Platelets).count();
    let (lo, hi) = Feature::Platelets.interval()?;
    (n > 0).then(|| format!("{n} platelet count(s) outside [{lo}, {hi}]; the documented unit differs from the file's"))
}

fn load(input: &InputArgs) -> Result<Cohort, Failure> {
    let cohort = load_cohort(&input.input, input.strict)?;
    for w in cohort.warnings.iter().filter(|w| w.feature != Feature::Platelets) {
        eprintln!("warning: {w}");
    }
    if let Some(note) = platelet_note(&cohort) {
        eprintln!("note: {note}");
    }
    Ok(cohort)
}

fn validate(a: &ValidateArgs) -> Result<(), Failure> {
    let cohort = load_cohort(&a.input, false)?;
    let stats = cohort_stats(&cohort)?;
    let violations: Vec<_> = cohort
        .warnings
        .iter()
        .filter(|w| w.feature != Feature::Platelets)
        .collect();

    let mut report = String::new();
    let _ = writeln!(report, "source: {}", cohort.provenance.source);
    let _ = writeln!(report, "records: {}", stats.records);
    let _ = writeln!(report, "sex: {} women (sex=0), {} men (sex=1)", stats.women, stats.men);
    let _ = writeln!(report, "death events: {}, survivors: {}", stats.deaths, stats.survivors);
    let _ = writeln!(report, "feature,min,max,mean,interval,status");
    for f in &stats.features {
        let (interval, status) = match f.feature.interval() {
            Some((lo, hi)) => {
                let bad = cohort.warnings.iter().filter(|w| w.feature == f.feature).count();
                let status = match bad {
                    0 => "ok".to_string(),
                    n if f.feature == Feature::Platelets => format!("{n} outside (unit note)"),
                    n => format!("{n} outside"),
                };
                (format!("[{lo}, {hi}]"), status)
            }
            None => ("{0, 1}".to_string(), "ok".to_string()),
        };
        let _ = writeln!(
            report,
            "{},{},{},{:.4},{interval},{status}",
            f.feature, f.min, f.max, f.mean
        );
    }
    if let Some(note) = platelet_note(&cohort) {
        let _ = writeln!(report, "note: {note}");
    }
    for w in &violations {
        let _ = writeln!(report, "violation: {w}");
    }
    print!("{report}");

    let outcome = if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_DATA,
            message: format!("{} value(s) outside their documented interval", violations.len()),
        })
    };
    if let Some(out) = &a.out {
        let dir = RunDir::create(out, "validate", a)?;
        dir.write("validation.txt", &report)?;
        if let Err(f) = &outcome {
            dir.mark_failed(f);
        }
    }
    outcome
}

const HISTOGRAM_FILE: &str = "age-histogram.csv";

fn explore(a: &ExploreArgs) -> Result<(), Failure> {
    let mut pairings = Vec::new();
    let mut histogram = a.pairings.is_empty();
    for name in &a.pairings {
        match Pairing::from_name(name) {
            Some(p) => pairings.push(p),
            None if name == cardio_lstm::tasks::explore::HISTOGRAM_NAME => histogram = true,
            None => {
                return Err(Failure::usage(format!(
                    "unknown pairing {name:?}; valid pairings: {}",
                    Pairing::valid_names().join(", ")
                )))
            }
        }
    }
    if a.pairings.is_empty() {
        pairings = Pairing::ALL.to_vec();
    }
    if !(a.bin_width.is_finite() && a.bin_width > 0.0) {
        return Err(Failure::usage(format!("bin width must be positive, got {}", a.bin_width)));
    }
    let cohort = load(&a.input)?;
    let dir = RunDir::create(&a.out, "explore", a)?;
    dir.guard(|dir| {
        for p in pairings {
            dir.write(&format!("{}.csv", p.name()), &pairing_table(&cohort, p).to_csv())?;
            println!("wrote {}", dir.path(&format!("{}.csv", p.name())).display());
        }
        if histogram {
            let bins = age_histogram(&cohort, a.bin_width)?;
            dir.write(HISTOGRAM_FILE, &histogram_csv(&bins))?;
            println!("wrote {}", dir.path(HISTOGRAM_FILE).display());
        }
        Ok(())
    })
}

fn classifier_config(a: &TrainClassifierArgs) -> ClassifierConfig {
    ClassifierConfig {
        training: a.training.config(LossKind::BinaryCrossEntropy),
        hidden_dim: a.hidden_dim,
        time_as_feature: a.time_as_feature,
    }
}

#[derive(Serialize)]
struct EvaluationSummary {
    evaluated: usize,
    threshold: f64,
    accuracy: f64,
    majority_baseline: f64,
    tn: usize,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
    tp: usize,
}

fn summary_json(ev: &Evaluation, threshold: f64, cohort: &Cohort) -> String {
    let m = ev.matrix;
    let s = EvaluationSummary {
        evaluated: m.total(),
        threshold,
        accuracy: ev.accuracy,
        majority_baseline: majority_baseline(cohort),
        tn: m.tn,
        fp: m.fp,
        fn_: m.fn_,
        tp: m.tp,
    };
    let mut text = serde_json::to_string_pretty(&s).unwrap_or_default();
    text.push('\n');
    text
}

fn train_classifier(a: &TrainClassifierArgs) -> Result<(), Failure> {
    let cfg = classifier_config(a);
    cfg.training.validate()?;
    let cohort = load(&a.input)?;
    let dir = RunDir::create(&a.out, "train-classifier", a)?;
    dir.guard(|dir| {
        if let Some(k) = a.folds {
            let cv = cross_validate(&cohort, &cfg, k, a.threshold)?;
            for f in &cv.folds {
                dir.write(&format!("fold-{}-trace.csv", f.fold), &f.trace.to_csv())?;
                dir.write(&format!("fold-{}-confusion.csv", f.fold), &f.evaluation.matrix.to_csv())?;
                println!(
                    "fold {}: accuracy {:.4} on {} records",
                    f.fold,
                    f.evaluation.accuracy,
                    f.evaluation.matrix.total()
                );
            }
            dir.write("cv-summary.csv", &cv.summary_csv())?;
            println!(
                "mean accuracy {:.4} (majority baseline {:.4})",
                cv.mean_accuracy,
                majority_baseline(&cohort)
            );
            return Ok(());
        }
        let (train_c, test_c) = split(&cohort, a.test_fraction, a.training.seed)?;
        let (model, trace) = classify_train(&train_c, &cfg, Some(&test_c))?;
        dir.write("trace.csv", &trace.to_csv())?;
        model.to_checkpoint().save(&dir.path("checkpoint.txt"))?;
        let probs = model.probabilities(&test_c, cfg.training.parallelism)?;
        let ev = evaluate_probabilities(&probs, &test_c, a.threshold)?;
        dir.write("confusion.csv", &ev.matrix.to_csv())?;
        dir.write("evaluation.json", &summary_json(&ev, a.threshold, &test_c))?;
        println!(
            "trained on {} records, accuracy {:.4} on {} held-out records",
            train_c.len(),
            ev.accuracy,
            test_c.len()
        );
        Ok(())
    })
}

/// Thresholds of the evaluation sweep.
pub const SWEEP: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

fn eval_classifier(a: &EvalClassifierArgs) -> Result<(), Failure> {
    if !(a.threshold > 0.0 && a.threshold < 1.0) {
        return Err(Failure::usage(format!("threshold must lie in (0, 1), got {}", a.threshold)));
    }
    let model = ClassifierModel::from_checkpoint(&Checkpoint::load(&a.checkpoint)?)?;
    let cohort = load(&a.input)?;
    let dir = RunDir::create(&a.out, "eval-classifier", a)?;
    dir.guard(|dir| {
        let ev = classify_eval(&model, &cohort, a.threshold)?;
        dir.write("confusion.csv", &ev.matrix.to_csv())?;
        dir.write("evaluation.json", &summary_json(&ev, a.threshold, &cohort))?;
        let probs = model.probabilities(&cohort, Parallelism::default())?;
        let mut sweep = String::from("threshold,tn,fp,fn,tp,accuracy\n");
        for t in SWEEP {
            let e = evaluate_probabilities(&probs, &cohort, t)?;
            let m = e.matrix;
            let _ = writeln!(sweep, "{t},{},{},{},{},{}", m.tn, m.fp, m.fn_, m.tp, e.accuracy);
        }
        dir.write("threshold-sweep.csv", &sweep)?;
        println!("accuracy {:.4} on {} records", ev.accuracy, ev.matrix.total());
        Ok(())
    })
}

#[derive(Serialize)]
struct ForecastResolved<'a> {
    #[serde(flatten)]
    args: &'a ForecastArgs,
    resolved_train_fraction: f64,
}

fn forecast(a: &ForecastArgs) -> Result<(), Failure> {
    let train_fraction = a.train_fraction.unwrap_or(match a.mode {
        ForecastMode::Holdout => 0.67,
        ForecastMode::AllData => 1.0,
    });
    if a.mode == ForecastMode::AllData && a.horizon == 0 {
        return Err(Failure::usage("horizon must be at least 1"));
    }
    let cfg = ForecastConfig {
        training: a.training.config(LossKind::MeanSquaredError),
        hidden_dim: a.hidden_dim,
        window: a.window,
        train_fraction,
    };
    cfg.training.validate()?;
    let cohort = load(&a.input)?;
    let series = build_cumulative_series(&cohort)?;
    let values = series.values();
    let resolved = ForecastResolved {
        args: a,
        resolved_train_fraction: train_fraction,
    };
    let dir = RunDir::create(&a.out, "forecast", &resolved)?;
    dir.guard(|dir| {
        let run = forecast_train(&values, &cfg)?;
        dir.write("trace.csv", &run.trace.to_csv())?;
        run.forecaster.to_checkpoint().save(&dir.path("checkpoint.txt"))?;
        match a.mode {
            ForecastMode::Holdout => {
                dir.write("series.csv", &holdout_table(&values, &run))?;
                match run.held_out_scaled_mse() {
                    Some(mse) => println!("held-out one-step mse {mse:.6} (scaled) over {} days", run.held_out.len()),
                    None => println!("no held-out days"),
                }
            }
            ForecastMode::AllData => {
                let future = forecast_extrapolate(&run.forecaster, &values, a.horizon)?;
                dir.write("series.csv", &all_data_table(&values, &run, &future))?;
                println!(
                    "{} deaths by day {}; predicted {:.1} by day {}",
                    values.last().copied().unwrap_or(0.0),
                    values.len() - 1,
                    future.last().copied().unwrap_or(f64::NAN),
                    values.len() - 1 + a.horizon
                );
            }
        }
        Ok(())
    })
}

fn gradcheck(a: &GradcheckArgs) -> Result<(), Failure> {
    if let Some(t) = &a.inject_fault {
        if !TENSOR_NAMES.contains(&t.as_str()) {
            return Err(Failure::usage(format!(
                "unknown tensor {t:?}; valid names: {}",
                TENSOR_NAMES.join(", ")
            )));
        }
    }
    let problem = GradCheckProblem::random(a.seed, a.input_dim, a.hidden_dim, a.steps)?;
    let opts = GradCheckOptions {
        fault: a.inject_fault.as_ref().map(|t| InjectedFault {
            tensor: t.clone(),
            factor: 2.0,
        }),
        ..Default::default()
    };
    let dir = a.out.as_deref().map(|out| RunDir::create(out, "gradcheck", a)).transpose()?;
    let checked = (|| -> Result<(), Failure> {
        let report = problem.check(&opts)?;
        let csv = report.to_csv();
        print!("{csv}");
        if let Some(dir) = &dir {
            dir.write("gradcheck.csv", &csv)?;
        }
        if report.passed() {
            println!("all {} tensors within {:e}", report.tensors.len(), report.threshold);
            Ok(())
        } else {
            let names: Vec<&str> = report.failing().iter().map(|t| t.name).collect();
            Err(Failure::numeric(format!(
                "gradient check failed for {} (threshold {:e})",
                names.join(", "),
                report.threshold
            )))
        }
    })();
    if let (Err(f), Some(dir)) = (&checked, &dir) {
        dir.mark_failed(f);
    }
    checked
}
