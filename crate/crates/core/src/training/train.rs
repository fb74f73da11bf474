use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::parallel::{self, Parallelism};
use crate::tensors::TensorSet;

use super::loss::LossKind;
use super::model::{Example, ModelGrads, SequenceModel};
use super::optim::{Optimizer, OptimizerKind};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
    pub parallelism: Parallelism,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 1e-3,
            batch_size: 16,
            seed: 1,
            optimizer: OptimizerKind::adam(),
            loss: LossKind::BinaryCrossEntropy,
            parallelism: Parallelism::default(),
        }
    }
}

impl TrainingConfig {
    /// A learning rate of exactly zero is accepted and turns training into a
    /// no-op; negative or non-finite rates are not.
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Param("epochs must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Param(format!("learning rate must be finite and non-negative, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Param("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when no evaluation set was supplied.
    pub test_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingTrace {
    pub records: Vec<EpochRecord>,
}

impl TrainingTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first(&self) -> Option<&EpochRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// `epoch,train_loss,test_loss`, one line per epoch; the test column is
    /// empty when there was no evaluation set.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,test_loss\n");
        for r in &self.records {
            let test = r.test_loss.map(|v| format!("{v:?}")).unwrap_or_default();
            let _ = writeln!(out, "{},{:?},{}", r.epoch, r.train_loss, test);
        }
        out
    }
}

/// Mean loss over `data` under the current parameters.
pub fn mean_loss(model: &SequenceModel, data: &[Example], kind: LossKind, mode: Parallelism) -> Result<f64> {
    let losses = parallel::map(mode, data, |ex| model.loss(ex, kind));
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / data.len() as f64)
}

/// Sum of losses and gradients over `batch`, reduced in batch order.
pub fn batch_gradients(
    model: &SequenceModel,
    data: &[Example],
    batch: &[usize],
    kind: LossKind,
    mode: Parallelism,
) -> Result<(f64, ModelGrads)> {
    let results = parallel::map(mode, batch, |&i| model.loss_and_grads(&data[i], kind));
    let mut total = 0.0;
    let mut grads = ModelGrads::zeros_like(model);
    for r in results {
        let (l, g) = r?;
        total += l;
        grads.accumulate(&g);
    }
    Ok((total, grads))
}

/// Minibatch training. Each epoch visits the data in an order shuffled by a
/// generator seeded once from `cfg.seed`, so the run is a pure function of
/// the initial model, the data and the config. The recorded training loss is
/// the mean of per-example losses seen during the epoch; the test loss is
/// taken after the epoch's last update.
pub fn train(
    mut model: SequenceModel,
    data: &[Example],
    cfg: &TrainingConfig,
    eval: &[Example],
) -> Result<(SequenceModel, TrainingTrace)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Usage("training data is empty".into()));
    }
    let mut rng = Rng::new(cfg.seed);
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = TrainingTrace::default();

    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let non_finite = || Error::NonFiniteLoss { epoch, batch: b + 1 };
            let (total, mut grads) = match batch_gradients(&model, data, batch, cfg.loss, cfg.parallelism) {
                Ok(r) => r,
                Err(Error::NonFiniteValue(_)) => return Err(non_finite()),
                Err(e) => return Err(e),
            };
            if !total.is_finite() || !grads.all_finite() {
                return Err(non_finite());
            }
            grads.scale(1.0 / batch.len() as f64);
            optimizer.step(&mut model, &grads)?;
            if !model.all_finite() {
                return Err(non_finite());
            }
            epoch_total += total;
        }
        let train_loss = epoch_total / data.len() as f64;
        let test_loss = if eval.is_empty() {
            None
        } else {
            let l = mean_loss(&model, eval, cfg.loss, cfg.parallelism).map_err(|e| match e {
                Error::NonFiniteValue(_) => Error::NonFiniteLoss { epoch, batch: 0 },
                other => other,
            })?;
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: 0 });
            }
            Some(l)
        };
        if !train_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        trace.records.push(EpochRecord {
            epoch,
            train_loss,
            test_loss,
        });
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Vector;

    fn vec(xs: &[f64]) -> Vector {
        Vector::new(xs.to_vec()).unwrap()
    }

    fn xor_data() -> Vec<Example> {
        [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]
            .iter()
            .map(|&(a, b)| Example {
                inputs: vec![vec(&[a]), vec(&[b])],
                target: if a != b { 1.0 } else { 0.0 },
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let model = SequenceModel::init(1, 4, &mut Rng::new(3)).unwrap();
        let cfg = TrainingConfig {
            epochs: 5,
            learning_rate: 0.0,
            batch_size: 2,
            ..Default::default()
        };
        let data = xor_data();
        let (trained, trace) = train(model.clone(), &data, &cfg, &data).unwrap();
        assert_eq!(trained, model);
        let first = trace.records[0];
        for r in &trace.records {
            assert_eq!(r.test_loss, first.test_loss);
            assert!((r.train_loss - first.train_loss).abs() < 1e-15);
        }
    }

    #[test]
    fn learnable_singleton_improves() {
        let model = SequenceModel::init(2, 3, &mut Rng::new(8)).unwrap();
        let data = vec![Example {
            inputs: vec![vec(&[0.2, 0.9])],
            target: 1.0,
        }];
        let cfg = TrainingConfig {
            epochs: 200,
            ..Default::default()
        };
        let (_, trace) = train(model, &data, &cfg, &[]).unwrap();
        assert_eq!(trace.len(), 200);
        assert!(trace.last().unwrap().train_loss < trace.first().unwrap().train_loss);
        assert!(trace.records.iter().all(|r| r.test_loss.is_none()));
    }

    #[test]
    fn reruns_are_bitwise_identical_in_both_modes() {
        let data = xor_data();
        let run = |parallelism| {
            let model = SequenceModel::init(1, 5, &mut Rng::new(2)).unwrap();
            let cfg = TrainingConfig {
                epochs: 30,
                learning_rate: 0.05,
                batch_size: 3,
                parallelism,
                ..Default::default()
            };
            train(model, &data, &cfg, &data).unwrap()
        };
        let (m1, t1) = run(Parallelism::Sequential);
        let (m2, t2) = run(Parallelism::Parallel);
        let (m3, t3) = run(Parallelism::Parallel);
        assert_eq!(t1.to_csv(), t2.to_csv());
        assert_eq!(t2.to_csv(), t3.to_csv());
        assert_eq!(m1, m2);
        assert_eq!(m2, m3);
    }

    #[test]
    fn xor_sequences_are_learnable() {
        let data = xor_data();
        let model = SequenceModel::init(1, 8, &mut Rng::new(1)).unwrap();
        let cfg = TrainingConfig {
            epochs: 2000,
            learning_rate: 0.05,
            batch_size: 4,
            ..Default::default()
        };
        let (trained, trace) = train(model, &data, &cfg, &data).unwrap();
        let best = trace.records.iter().filter_map(|r| r.test_loss).fold(f64::INFINITY, f64::min);
        assert!(best < 0.01, "best loss {best}");
        assert!(mean_loss(&trained, &data, LossKind::BinaryCrossEntropy, Parallelism::Sequential).unwrap() < 0.01);
    }

    #[test]
    fn divergence_aborts_with_location() {
        let data = vec![Example {
            inputs: vec![vec(&[1.0])],
            target: 1e200,
        }];
        let model = SequenceModel::init(1, 2, &mut Rng::new(1)).unwrap();
        let cfg = TrainingConfig {
            epochs: 3,
            learning_rate: 1.0,
            optimizer: OptimizerKind::Sgd,
            loss: LossKind::MeanSquaredError,
            ..Default::default()
        };
        let err = train(model, &data, &cfg, &[]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 1, batch: 1 }), "{err}");
    }

    #[test]
    fn config_and_data_errors() {
        let model = SequenceModel::init(1, 2, &mut Rng::new(1)).unwrap();
        let cfg = TrainingConfig::default();
        assert!(matches!(train(model.clone(), &[], &cfg, &[]), Err(Error::Usage(_))));
        for bad in [
            TrainingConfig { epochs: 0, ..cfg.clone() },
            TrainingConfig { learning_rate: -1.0, ..cfg.clone() },
            TrainingConfig { batch_size: 0, ..cfg.clone() },
        ] {
            assert!(matches!(train(model.clone(), &xor_data(), &bad, &[]), Err(Error::Param(_))));
        }
    }

    #[test]
    fn trace_csv_layout() {
        let trace = TrainingTrace {
            records: vec![
                EpochRecord { epoch: 1, train_loss: 0.5, test_loss: Some(0.25) },
                EpochRecord { epoch: 2, train_loss: 0.125, test_loss: None },
            ],
        };
        assert_eq!(trace.to_csv(), "epoch,train_loss,test_loss\n1,0.5,0.25\n2,0.125,\n");
    }
}
