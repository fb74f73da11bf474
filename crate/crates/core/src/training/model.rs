use crate::checkpoint::{self, Checkpoint};
use crate::error::{shape_err, Error, Result};
use crate::lstm::{bptt, sequence_forward, LstmGrads, LstmParams, LstmState};
use crate::numerics::{add, matvec, rand_uniform, sigmoid_scalar, Matrix, Rng, Vector};
use crate::tensors::{TensorRef, TensorSet};

use super::loss::{bce_loss, mse_loss, LossKind};

/// Affine read-out `y = W·h + b` on the final hidden state.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseHead {
    pub(crate) w: Matrix,
    pub(crate) b: Vector,
}

impl DenseHead {
    pub fn new(w: Matrix, b: Vector) -> Result<Self> {
        if w.rows() != b.len() {
            return Err(shape_err("DenseHead::new", &w, &b));
        }
        Ok(Self { w, b })
    }

    pub fn zeros(out_dim: usize, hidden_dim: usize) -> Self {
        Self {
            w: Matrix::zeros(out_dim, hidden_dim),
            b: Vector::zeros(out_dim),
        }
    }

    /// Weights uniform in ±1/√hidden_dim, bias zero.
    pub fn init(out_dim: usize, hidden_dim: usize, rng: &mut Rng) -> Result<Self> {
        let bound = 1.0 / (hidden_dim.max(1) as f64).sqrt();
        Self::new(
            rand_uniform(rng, out_dim, hidden_dim, -bound, bound)?,
            Vector::zeros(out_dim),
        )
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn weights(&self) -> &Matrix {
        &self.w
    }

    pub fn bias(&self) -> &Vector {
        &self.b
    }

    pub fn forward(&self, h: &Vector) -> Result<Vector> {
        add(&matvec(&self.w, h)?, &self.b)
    }
}

impl TensorSet for DenseHead {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        head_tensors(&self.w, &self.b)
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![("W_y", self.w.as_mut_slice()), ("b_y", self.b.as_mut_slice())]
    }
}

fn head_tensors<'a>(w: &'a Matrix, b: &'a Vector) -> Vec<TensorRef<'a>> {
    vec![
        TensorRef {
            name: "W_y",
            rows: w.rows(),
            cols: w.cols(),
            data: w.as_slice(),
        },
        TensorRef {
            name: "b_y",
            rows: b.len(),
            cols: 1,
            data: b.as_slice(),
        },
    ]
}

/// One training pair: an input sequence and a scalar target.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub inputs: Vec<Vector>,
    pub target: f64,
}

/// LSTM encoder followed by a dense head with one output.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceModel {
    pub lstm: LstmParams,
    pub head: DenseHead,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub lstm: LstmGrads,
    pub head: DenseHead,
}

impl TensorSet for SequenceModel {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = self.lstm.tensors();
        out.extend(self.head.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out = self.lstm.tensors_mut();
        out.extend(self.head.tensors_mut());
        out
    }
}

impl TensorSet for ModelGrads {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = self.lstm.tensors();
        out.extend(self.head.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out = self.lstm.tensors_mut();
        out.extend(self.head.tensors_mut());
        out
    }
}

impl ModelGrads {
    pub fn zeros_like(m: &SequenceModel) -> Self {
        Self {
            lstm: LstmGrads::zeros_like(&m.lstm),
            head: DenseHead::zeros(m.head.out_dim(), m.head.in_dim()),
        }
    }

    pub fn accumulate(&mut self, other: &ModelGrads) {
        for ((_, dst), src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.iter_mut().zip(src.data).for_each(|(d, s)| *d += s);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

impl SequenceModel {
    pub fn new(lstm: LstmParams, head: DenseHead) -> Result<Self> {
        if head.in_dim() != lstm.hidden_dim() || head.out_dim() != 1 {
            return Err(shape_err(
                "SequenceModel::new",
                format!("head 1x{}", lstm.hidden_dim()),
                format!("head {}x{}", head.out_dim(), head.in_dim()),
            ));
        }
        Ok(Self { lstm, head })
    }

    /// Fresh model; LSTM weights are drawn before head weights.
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut Rng) -> Result<Self> {
        let lstm = LstmParams::init(input_dim, hidden_dim, rng)?;
        let head = DenseHead::init(1, hidden_dim, rng)?;
        Self::new(lstm, head)
    }

    pub fn input_dim(&self) -> usize {
        self.lstm.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.lstm.hidden_dim()
    }

    /// Raw head output (pre-link) for one sequence.
    pub fn logit(&self, inputs: &[Vector]) -> Result<f64> {
        if inputs.is_empty() {
            return Err(Error::Usage("model input sequence is empty".into()));
        }
        let (state, _) = sequence_forward(&self.lstm, &LstmState::zeros(self.hidden_dim()), inputs)?;
        Ok(self.head.forward(&state.h)?[0])
    }

    /// Prediction after the output link: a probability for cross-entropy,
    /// the raw value for squared error.
    pub fn predict(&self, inputs: &[Vector], loss: LossKind) -> Result<f64> {
        let z = self.logit(inputs)?;
        Ok(match loss {
            LossKind::BinaryCrossEntropy => sigmoid_scalar(z),
            LossKind::MeanSquaredError => z,
        })
    }

    pub fn loss(&self, ex: &Example, kind: LossKind) -> Result<f64> {
        let pred = self.predict(&ex.inputs, kind)?;
        Ok(match kind {
            LossKind::BinaryCrossEntropy => bce_loss(pred, ex.target).0,
            LossKind::MeanSquaredError => mse_loss(pred, ex.target).0,
        })
    }

    /// Loss and gradients for every parameter on one example.
    pub fn loss_and_grads(&self, ex: &Example, kind: LossKind) -> Result<(f64, ModelGrads)> {
        if ex.inputs.is_empty() {
            return Err(Error::Usage("model input sequence is empty".into()));
        }
        let (state, caches) = sequence_forward(&self.lstm, &LstmState::zeros(self.hidden_dim()), &ex.inputs)?;
        let z = self.head.forward(&state.h)?[0];
        let (loss, dz) = match kind {
            LossKind::BinaryCrossEntropy => {
                let p = sigmoid_scalar(z);
                let (l, dp) = bce_loss(p, ex.target);
                (l, dp * p * (1.0 - p))
            }
            LossKind::MeanSquaredError => mse_loss(z, ex.target),
        };
        let mut head = DenseHead::zeros(1, self.hidden_dim());
        head.w.add_outer(&[dz], state.h.as_slice());
        head.b.as_mut_slice()[0] = dz;
        let mut dh = vec![0.0; self.hidden_dim()];
        self.head.w.add_transpose_matvec(&[dz], &mut dh);
        let lstm = bptt(&self.lstm, &caches, &Vector::checked(dh, "head backward")?)?;
        Ok((loss, ModelGrads { lstm, head }))
    }

    pub fn write_checkpoint(&self, ck: &mut Checkpoint) {
        checkpoint::push_lstm(ck, "lstm.", &self.lstm);
        ck.push_set("head.", &self.head);
    }

    pub fn read_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let lstm = checkpoint::read_lstm(ck, "lstm.")?;
        let head = DenseHead::new(ck.matrix("head.W_y")?, ck.vector("head.b_y")?)?;
        Self::new(lstm, head)
    }
}
