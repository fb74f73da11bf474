use std::fmt::Write as _;

use crate::error::{shape_err, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tp: usize,
}

impl ConfusionMatrix {
    pub fn tally(predictions: &[bool], labels: &[bool]) -> Result<Self> {
        if predictions.len() != labels.len() {
            return Err(shape_err("ConfusionMatrix::tally", predictions.len(), labels.len()));
        }
        let mut m = Self::default();
        for (&p, &y) in predictions.iter().zip(labels) {
            match (p, y) {
                (false, false) => m.tn += 1,
                (true, false) => m.fp += 1,
                (false, true) => m.fn_ += 1,
                (true, true) => m.tp += 1,
            }
        }
        Ok(m)
    }

    pub fn total(&self) -> usize {
        self.tn + self.fp + self.fn_ + self.tp
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.tn + self.tp) as f64 / self.total() as f64
    }

    pub fn predicted_positive(&self) -> usize {
        self.tp + self.fp
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell,count\n");
        for (name, v) in [("tn", self.tn), ("fp", self.fp), ("fn", self.fn_), ("tp", self.tp)] {
            let _ = writeln!(out, "{name},{v}");
        }
        out
    }
}
