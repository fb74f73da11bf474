use crate::checkpoint::Checkpoint;
use crate::dataset::{normalize, stratified_folds, Cohort, Feature, NormalizationSpec, PatientRecord};
use crate::error::{Error, Result};
use crate::numerics::{Rng, Vector};
use crate::parallel::{self, Parallelism};
use crate::training::{train, Example, LossKind, SequenceModel, TrainingConfig, TrainingTrace};

use super::metrics::ConfusionMatrix;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub training: TrainingConfig,
    pub hidden_dim: usize,
    /// Feed follow-up time to the model. Off by default: time is strongly
    /// tied to the outcome.
    pub time_as_feature: bool,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            training: TrainingConfig::default(),
            hidden_dim: 16,
            time_as_feature: false,
        }
    }
}

/// Death-event classifier. Each patient is one timestep whose input is the
/// normalized feature row.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierModel {
    pub model: SequenceModel,
    pub normalization: NormalizationSpec,
}

impl ClassifierModel {
    pub fn features(&self) -> &[Feature] {
        &self.normalization.features
    }

    pub fn time_as_feature(&self) -> bool {
        self.features().contains(&Feature::Time)
    }

    fn encode(&self, r: &PatientRecord) -> Result<Vec<Vector>> {
        Ok(vec![Vector::checked(self.normalization.apply(r), "classifier input")?])
    }

    /// Probability of a death event.
    pub fn probability(&self, r: &PatientRecord) -> Result<f64> {
        self.model.predict(&self.encode(r)?, LossKind::BinaryCrossEntropy)
    }

    pub fn probabilities(&self, cohort: &Cohort, mode: Parallelism) -> Result<Vec<f64>> {
        parallel::map(mode, &cohort.records, |r| self.probability(r)).into_iter().collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.set_meta("kind", "classifier");
        let names: Vec<&str> = self.features().iter().map(|f| f.name()).collect();
        ck.set_meta("features", names.join(","));
        let spec = &self.normalization;
        ck.set_meta("norm_min", join_exact(&spec.mins));
        ck.set_meta("norm_max", join_exact(&spec.maxs));
        self.model.write_checkpoint(&mut ck);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        if ck.meta("kind")? != "classifier" {
            return Err(bad(format!("expected a classifier checkpoint, found kind {}", ck.meta("kind")?)));
        }
        let features = ck
            .meta("features")?
            .split(',')
            .map(|n| Feature::from_name(n).ok_or_else(|| bad(format!("unknown feature {n}"))))
            .collect::<Result<Vec<_>>>()?;
        let mins = parse_exact(ck.meta("norm_min")?).map_err(bad)?;
        let maxs = parse_exact(ck.meta("norm_max")?).map_err(bad)?;
        if mins.len() != features.len() || maxs.len() != features.len() {
            return Err(bad("normalization length does not match feature list".into()));
        }
        let model = SequenceModel::read_checkpoint(ck)?;
        if model.input_dim() != features.len() {
            return Err(bad(format!(
                "model input dim {} does not match {} features",
                model.input_dim(),
                features.len()
            )));
        }
        Ok(Self {
            model,
            normalization: NormalizationSpec { features, mins, maxs },
        })
    }
}

fn join_exact(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

fn parse_exact(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.parse::<f64>().map_err(|_| format!("bad number {t:?}")))
        .collect()
}

fn examples(cohort: &Cohort, spec: &NormalizationSpec) -> Result<Vec<Example>> {
    normalize(cohort, spec)
        .into_iter()
        .zip(&cohort.records)
        .map(|(row, r)| {
            Ok(Example {
                inputs: vec![Vector::checked(row, "classifier input")?],
                target: if r.death_event { 1.0 } else { 0.0 },
            })
        })
        .collect()
}

/// Fits the normalization on `cohort`, then trains with cross-entropy. When
/// `eval` is given its loss is recorded after every epoch, using the
/// training normalization.
pub fn classify_train(
    cohort: &Cohort,
    cfg: &ClassifierConfig,
    eval: Option<&Cohort>,
) -> Result<(ClassifierModel, TrainingTrace)> {
    if cohort.is_empty() {
        return Err(Error::Usage("classifier training cohort is empty".into()));
    }
    if cfg.hidden_dim == 0 {
        return Err(Error::Param("hidden dim must be at least 1".into()));
    }
    let features = Feature::model_inputs(cfg.time_as_feature);
    let spec = NormalizationSpec::fit(cohort, &features)?;
    let data = examples(cohort, &spec)?;
    let eval_data = match eval {
        Some(c) => examples(c, &spec)?,
        None => Vec::new(),
    };
    let mut rng = Rng::new(cfg.training.seed);
    let model = SequenceModel::init(features.len(), cfg.hidden_dim, &mut rng)?;
    let training = TrainingConfig {
        loss: LossKind::BinaryCrossEntropy,
        ..cfg.training.clone()
    };
    let (model, trace) = train(model, &data, &training, &eval_data)?;
    Ok((
        ClassifierModel {
            model,
            normalization: spec,
        },
        trace,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub matrix: ConfusionMatrix,
    pub accuracy: f64,
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::Param(format!("threshold must lie in (0, 1), got {threshold}")))
    }
}

/// Tallies predictions from precomputed probabilities: positive iff
/// `p ≥ threshold`.
pub fn evaluate_probabilities(probs: &[f64], cohort: &Cohort, threshold: f64) -> Result<Evaluation> {
    check_threshold(threshold)?;
    let predictions: Vec<bool> = probs.iter().map(|&p| p >= threshold).collect();
    let labels: Vec<bool> = cohort.records.iter().map(|r| r.death_event).collect();
    let matrix = ConfusionMatrix::tally(&predictions, &labels)?;
    Ok(Evaluation {
        matrix,
        accuracy: matrix.accuracy(),
    })
}

pub fn classify_eval(m: &ClassifierModel, cohort: &Cohort, threshold: f64) -> Result<Evaluation> {
    check_threshold(threshold)?;
    let probs = m.probabilities(cohort, Parallelism::default())?;
    evaluate_probabilities(&probs, cohort, threshold)
}

/// Share of the more frequent outcome.
pub fn majority_baseline(cohort: &Cohort) -> f64 {
    if cohort.is_empty() {
        return 0.0;
    }
    let deaths = cohort.deaths();
    deaths.max(cohort.len() - deaths) as f64 / cohort.len() as f64
}

/// Copy of `cohort` with the death labels permuted.
pub fn shuffle_labels(cohort: &Cohort, seed: u64) -> Cohort {
    let mut labels: Vec<bool> = cohort.records.iter().map(|r| r.death_event).collect();
    Rng::new(seed).shuffle(&mut labels);
    let records = cohort
        .records
        .iter()
        .zip(labels)
        .map(|(r, y)| PatientRecord {
            death_event: y,
            ..r.clone()
        })
        .collect();
    Cohort::from_records(records, format!("{}#shuffled", cohort.provenance.source))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldOutcome {
    pub fold: usize,
    pub train_size: usize,
    pub evaluation: Evaluation,
    pub trace: TrainingTrace,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrossValidation {
    pub folds: Vec<FoldOutcome>,
    pub mean_accuracy: f64,
}

impl CrossValidation {
    /// `fold,train_size,test_size,tn,fp,fn,tp,accuracy` plus a `mean` row.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("fold,train_size,test_size,tn,fp,fn,tp,accuracy\n");
        for f in &self.folds {
            let m = f.evaluation.matrix;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                f.fold,
                f.train_size,
                m.total(),
                m.tn,
                m.fp,
                m.fn_,
                m.tp,
                f.evaluation.accuracy
            ));
        }
        out.push_str(&format!("mean,,,,,,,{}\n", self.mean_accuracy));
        out
    }
}

/// Stratified k-fold cross-validation. Folds are assigned from
/// `cfg.training.seed` and trained independently, in parallel when
/// enabled; each fold's model is seeded identically.
pub fn cross_validate(cohort: &Cohort, cfg: &ClassifierConfig, k: usize, threshold: f64) -> Result<CrossValidation> {
    check_threshold(threshold)?;
    let folds = stratified_folds(cohort, k, cfg.training.seed)?;
    let run_fold = |fold: usize| -> Result<FoldOutcome> {
        let test_idx = &folds[fold];
        let mut train_idx: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != fold)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        train_idx.sort_unstable();
        let train_c = cohort.subset(&train_idx, &format!("fold{}-train", fold + 1));
        let test_c = cohort.subset(test_idx, &format!("fold{}-test", fold + 1));
        let (model, trace) = classify_train(&train_c, cfg, Some(&test_c))?;
        let probs = model.probabilities(&test_c, cfg.training.parallelism)?;
        Ok(FoldOutcome {
            fold: fold + 1,
            train_size: train_c.len(),
            evaluation: evaluate_probabilities(&probs, &test_c, threshold)?,
            trace,
        })
    };
    let outcomes = parallel::map_range(cfg.training.parallelism, k, run_fold)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mean_accuracy = outcomes.iter().map(|f| f.evaluation.accuracy).sum::<f64>() / k as f64;
    Ok(CrossValidation {
        folds: outcomes,
        mean_accuracy,
    })
}
