use std::fmt::Write as _;

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::numerics::{Rng, Vector};
use crate::training::{train, Example, LossKind, SequenceModel, TrainingConfig, TrainingTrace};

/// Min-max scaling of a series. A constant series maps to 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesScale {
    pub min: f64,
    pub max: f64,
}

impl SeriesScale {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Usage("cannot fit a scale to an empty series".into()));
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(min.is_finite() && max.is_finite()) {
            return Err(Error::NonFiniteValue("series"));
        }
        Ok(Self { min, max })
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    pub fn scale(&self, x: f64) -> f64 {
        if self.span() > 0.0 {
            (x - self.min) / self.span()
        } else {
            0.0
        }
    }

    pub fn unscale(&self, s: f64) -> f64 {
        self.min + s * self.span()
    }
}

/// One supervised pair: `inputs = s[t−w..t]`, `target = s[t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub target_index: usize,
    pub inputs: Vec<f64>,
    pub target: f64,
}

/// Sliding windows over an unscaled series, one per target index
/// `window..len`.
pub fn make_windows(values: &[f64], window: usize) -> Result<Vec<Window>> {
    if window == 0 {
        return Err(Error::Param("window must be at least 1".into()));
    }
    if values.len() <= window {
        return Err(Error::Usage(format!(
            "series of length {} is too short for window {window}",
            values.len()
        )));
    }
    Ok((window..values.len())
        .map(|t| Window {
            target_index: t,
            inputs: values[t - window..t].to_vec(),
            target: values[t],
        })
        .collect())
}

fn to_example(w: &Window, scale: &SeriesScale) -> Result<Example> {
    Ok(Example {
        inputs: w
            .inputs
            .iter()
            .map(|&v| Vector::checked(vec![scale.scale(v)], "series window"))
            .collect::<Result<_>>()?,
        target: scale.scale(w.target),
    })
}

/// Windows in scaled units, ready for training.
pub fn scaled_examples(windows: &[Window], scale: &SeriesScale) -> Result<Vec<Example>> {
    windows.iter().map(|w| to_example(w, scale)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForecastConfig {
    pub training: TrainingConfig,
    pub hidden_dim: usize,
    pub window: usize,
    /// Share of windows used for training; 1 trains on everything.
    pub train_fraction: f64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            training: TrainingConfig {
                loss: LossKind::MeanSquaredError,
                ..Default::default()
            },
            hidden_dim: 32,
            window: 10,
            train_fraction: 0.67,
        }
    }
}

pub const DEFAULT_HORIZON: usize = 60;

#[derive(Clone, Debug, PartialEq)]
pub struct ForecasterModel {
    pub model: SequenceModel,
    pub window: usize,
    pub scale: SeriesScale,
}

impl ForecasterModel {
    /// One-step prediction in original units from the last `window` values.
    pub fn predict_next(&self, recent: &[f64]) -> Result<f64> {
        if recent.len() < self.window {
            return Err(Error::Usage(format!(
                "need {} values to predict, got {}",
                self.window,
                recent.len()
            )));
        }
        let tail = &recent[recent.len() - self.window..];
        let inputs = tail
            .iter()
            .map(|&v| Vector::checked(vec![self.scale.scale(v)], "series window"))
            .collect::<Result<Vec<_>>>()?;
        let s = self.model.predict(&inputs, LossKind::MeanSquaredError)?;
        Ok(self.scale.unscale(s))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.set_meta("kind", "forecaster");
        ck.set_meta("window", self.window);
        ck.set_meta("scale_min", format!("{:?}", self.scale.min));
        ck.set_meta("scale_max", format!("{:?}", self.scale.max));
        self.model.write_checkpoint(&mut ck);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta("kind")? != "forecaster" {
            return Err(Error::Checkpoint(format!(
                "expected a forecaster checkpoint, found kind {}",
                ck.meta("kind")?
            )));
        }
        let window: usize = ck.meta_parse("window")?;
        if window == 0 {
            return Err(Error::Checkpoint("window must be at least 1".into()));
        }
        let model = SequenceModel::read_checkpoint(ck)?;
        if model.input_dim() != 1 {
            return Err(Error::Checkpoint(format!("forecaster input dim must be 1, got {}", model.input_dim())));
        }
        Ok(Self {
            model,
            window,
            scale: SeriesScale {
                min: ck.meta_parse("scale_min")?,
                max: ck.meta_parse("scale_max")?,
            },
        })
    }
}

/// A one-step prediction for the value at `index`, in original units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub index: usize,
    pub actual: f64,
    pub predicted: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForecastRun {
    pub forecaster: ForecasterModel,
    pub trace: TrainingTrace,
    /// Predictions for the training windows.
    pub in_sample: Vec<Prediction>,
    /// Teacher-forced one-step predictions for the windows after the
    /// training portion. Empty when every window is used for training.
    pub held_out: Vec<Prediction>,
}

impl ForecastRun {
    /// Mean squared one-step error over the held-out tail, in scaled units.
    pub fn held_out_scaled_mse(&self) -> Option<f64> {
        if self.held_out.is_empty() {
            return None;
        }
        let s = &self.forecaster.scale;
        let total: f64 = self
            .held_out
            .iter()
            .map(|p| (s.scale(p.predicted) - s.scale(p.actual)).powi(2))
            .sum();
        Some(total / self.held_out.len() as f64)
    }
}

/// Number of training windows for a given fraction: at least one, and all
/// of them when the fraction is 1.
pub fn train_window_count(n_windows: usize, train_fraction: f64) -> usize {
    if train_fraction >= 1.0 {
        return n_windows;
    }
    ((n_windows as f64 * train_fraction).round() as usize).clamp(1, n_windows)
}

/// Trains on the first `train_fraction` of the series' windows with squared
/// error. The scale is fitted to the values those windows cover.
pub fn forecast_train(values: &[f64], cfg: &ForecastConfig) -> Result<ForecastRun> {
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction <= 1.0) {
        return Err(Error::Param(format!("train fraction must lie in (0, 1], got {}", cfg.train_fraction)));
    }
    if cfg.hidden_dim == 0 {
        return Err(Error::Param("hidden dim must be at least 1".into()));
    }
    let windows = make_windows(values, cfg.window)?;
    let n_train = train_window_count(windows.len(), cfg.train_fraction);
    let scale = SeriesScale::fit(&values[..n_train + cfg.window])?;
    let data = scaled_examples(&windows[..n_train], &scale)?;
    let eval = scaled_examples(&windows[n_train..], &scale)?;

    let mut rng = Rng::new(cfg.training.seed);
    let model = SequenceModel::init(1, cfg.hidden_dim, &mut rng)?;
    let training = TrainingConfig {
        loss: LossKind::MeanSquaredError,
        ..cfg.training.clone()
    };
    let (model, trace) = train(model, &data, &training, &eval)?;
    let forecaster = ForecasterModel {
        model,
        window: cfg.window,
        scale,
    };
    let predict = |w: &Window| -> Result<Prediction> {
        Ok(Prediction {
            index: w.target_index,
            actual: w.target,
            predicted: forecaster.predict_next(&w.inputs)?,
        })
    };
    let in_sample = windows[..n_train].iter().map(predict).collect::<Result<Vec<_>>>()?;
    let held_out = windows[n_train..].iter().map(predict).collect::<Result<Vec<_>>>()?;
    Ok(ForecastRun {
        forecaster,
        trace,
        in_sample,
        held_out,
    })
}

/// Closed-loop forecast: each prediction is appended to the window that
/// produces the next one.
pub fn forecast_extrapolate(m: &ForecasterModel, values: &[f64], horizon: usize) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(Error::Param("horizon must be at least 1".into()));
    }
    if values.len() < m.window {
        return Err(Error::Usage(format!(
            "series of length {} is shorter than window {}",
            values.len(),
            m.window
        )));
    }
    let mut recent = values[values.len() - m.window..].to_vec();
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let next = m.predict_next(&recent)?;
        if !next.is_finite() {
            return Err(Error::NonFiniteValue("forecast"));
        }
        out.push(next);
        recent.remove(0);
        recent.push(next);
    }
    Ok(out)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `day,historical,real,predicted`. Days before the held-out tail carry the
/// historical value; held-out days carry the real value and its one-step
/// prediction.
pub fn holdout_table(values: &[f64], run: &ForecastRun) -> String {
    let start = run.held_out.first().map_or(values.len(), |p| p.index);
    let mut out = String::from("day,historical,real,predicted\n");
    for (day, &v) in values.iter().enumerate() {
        let (hist, real, pred) = if day < start {
            (Some(v), None, None)
        } else {
            let p = run.held_out.iter().find(|p| p.index == day).map(|p| p.predicted);
            (None, Some(v), p)
        };
        let _ = writeln!(out, "{day},{},{},{}", cell(hist), cell(real), cell(pred));
    }
    out
}

/// `day,historical,fitted,predicted_future`. The fitted column holds the
/// in-sample one-step predictions; the last `future.len()` rows extend past
/// the series.
pub fn all_data_table(values: &[f64], run: &ForecastRun, future: &[f64]) -> String {
    let mut out = String::from("day,historical,fitted,predicted_future\n");
    for (day, &v) in values.iter().enumerate() {
        let fitted = run.in_sample.iter().find(|p| p.index == day).map(|p| p.predicted);
        let _ = writeln!(out, "{day},{v},{},", cell(fitted));
    }
    for (k, &f) in future.iter().enumerate() {
        let _ = writeln!(out, "{},,,{f}", values.len() + k);
    }
    out
}
