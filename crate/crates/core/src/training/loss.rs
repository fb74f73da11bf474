/// Lower clamp for probabilities fed to the cross-entropy.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// Sigmoid output with binary cross-entropy.
    BinaryCrossEntropy,
    /// Linear output with squared error.
    MeanSquaredError,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::BinaryCrossEntropy => "binary_cross_entropy",
            LossKind::MeanSquaredError => "mean_squared_error",
        }
    }
}

/// `−[y·ln p + (1−y)·ln(1−p)]` with `p` clamped to `[1e-12, 1−1e-12]`.
/// Returns the loss and ∂loss/∂p, both at the clamped value.
pub fn bce_loss(p: f64, y: f64) -> (f64, f64) {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let loss = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
    let grad = -y / p + (1.0 - y) / (1.0 - p);
    (loss, grad)
}

/// `(ŷ − y)²` and its derivative `2(ŷ − y)`.
pub fn mse_loss(pred: f64, y: f64) -> (f64, f64) {
    let r = pred - y;
    (r * r, 2.0 * r)
}
