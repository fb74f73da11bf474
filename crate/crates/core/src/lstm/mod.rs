//! Single-layer LSTM cell: forward pass, sequence unrolling and full
//! backpropagation through time.
//!
//! Per timestep, with `z = [h_{t-1}, x_t]`:
//!
//! ```text
//! f_t  = σ(W_f·z + b_f)
//! i_t  = σ(W_i·z + b_i)
//! c̃_t  = tanh(W_c·z + b_c)
//! C_t  = f_t ∘ C_{t-1} + i_t ∘ c̃_t
//! o_t  = σ(W_o·z + b_o)
//! h_t  = o_t ∘ tanh(C_t)
//! ```

mod gradcheck;

pub use gradcheck::{
    grad_check, relative_error, GradCheckOptions, GradCheckProblem, GradCheckReport, HiddenLoss, InjectedFault,
    SquaredNorm, TensorError,
};

use crate::error::{shape_err, Error, Result};
use crate::numerics::{add, concat, hadamard, matvec, rand_uniform, sigmoid, tanh_v, Matrix, Rng, Vector};
use crate::tensors::{TensorRef, TensorSet};

/// Tensor names in checkpoint and report order.
pub const TENSOR_NAMES: [&str; 8] = ["W_f", "W_i", "W_c", "W_o", "b_f", "b_i", "b_c", "b_o"];

#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    input_dim: usize,
    hidden_dim: usize,
    pub(crate) w_f: Matrix,
    pub(crate) w_i: Matrix,
    pub(crate) w_c: Matrix,
    pub(crate) w_o: Matrix,
    pub(crate) b_f: Vector,
    pub(crate) b_i: Vector,
    pub(crate) b_c: Vector,
    pub(crate) b_o: Vector,
}

/// Gradients shaped exactly like [`LstmParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct LstmGrads {
    pub w_f: Matrix,
    pub w_i: Matrix,
    pub w_c: Matrix,
    pub w_o: Matrix,
    pub b_f: Vector,
    pub b_i: Vector,
    pub b_c: Vector,
    pub b_o: Vector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vector,
    pub c: Vector,
}

/// Everything the backward pass needs from one forward step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepCache {
    pub x: Vector,
    /// `[h_{t-1}, x_t]`
    pub z: Vector,
    pub f: Vector,
    pub i: Vector,
    /// Candidate state c̃_t.
    pub candidate: Vector,
    pub c_prev: Vector,
    pub c: Vector,
    pub o: Vector,
    pub tanh_c: Vector,
    pub h: Vector,
}

impl LstmState {
    pub fn zeros(hidden_dim: usize) -> Self {
        Self {
            h: Vector::zeros(hidden_dim),
            c: Vector::zeros(hidden_dim),
        }
    }
}

impl LstmParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        input_dim: usize,
        hidden_dim: usize,
        w_f: Matrix,
        w_i: Matrix,
        w_c: Matrix,
        w_o: Matrix,
        b_f: Vector,
        b_i: Vector,
        b_c: Vector,
        b_o: Vector,
    ) -> Result<Self> {
        let shape = (hidden_dim, hidden_dim + input_dim);
        for w in [&w_f, &w_i, &w_c, &w_o] {
            if w.shape() != shape {
                return Err(shape_err("LstmParams::new", format!("{}x{}", shape.0, shape.1), w));
            }
        }
        for b in [&b_f, &b_i, &b_c, &b_o] {
            if b.len() != hidden_dim {
                return Err(shape_err("LstmParams::new", format!("vector[{hidden_dim}]"), b));
            }
        }
        Ok(Self {
            input_dim,
            hidden_dim,
            w_f,
            w_i,
            w_c,
            w_o,
            b_f,
            b_i,
            b_c,
            b_o,
        })
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let w = Matrix::zeros(hidden_dim, hidden_dim + input_dim);
        let b = Vector::zeros(hidden_dim);
        Self {
            input_dim,
            hidden_dim,
            w_f: w.clone(),
            w_i: w.clone(),
            w_c: w.clone(),
            w_o: w,
            b_f: b.clone(),
            b_i: b.clone(),
            b_c: b.clone(),
            b_o: b,
        }
    }

    /// Weights uniform in ±1/√(hidden_dim + input_dim), biases zero.
    /// Matrices are drawn in `W_f, W_i, W_c, W_o` order.
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut Rng) -> Result<Self> {
        if hidden_dim == 0 {
            return Err(Error::Param("hidden_dim must be at least 1".into()));
        }
        let cols = hidden_dim + input_dim;
        let bound = 1.0 / (cols as f64).sqrt();
        let mut draw = || rand_uniform(rng, hidden_dim, cols, -bound, bound);
        let (w_f, w_i, w_c, w_o) = (draw()?, draw()?, draw()?, draw()?);
        let b = Vector::zeros(hidden_dim);
        Self::new(input_dim, hidden_dim, w_f, w_i, w_c, w_o, b.clone(), b.clone(), b.clone(), b)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn weights(&self) -> [&Matrix; 4] {
        [&self.w_f, &self.w_i, &self.w_c, &self.w_o]
    }

    pub fn biases(&self) -> [&Vector; 4] {
        [&self.b_f, &self.b_i, &self.b_c, &self.b_o]
    }

    /// Replaces one bias vector by name (`b_f`, `b_i`, `b_c` or `b_o`).
    pub fn set_bias(&mut self, name: &str, b: Vector) -> Result<()> {
        if b.len() != self.hidden_dim {
            return Err(shape_err("set_bias", format!("vector[{}]", self.hidden_dim), &b));
        }
        let slot = match name {
            "b_f" => &mut self.b_f,
            "b_i" => &mut self.b_i,
            "b_c" => &mut self.b_c,
            "b_o" => &mut self.b_o,
            other => return Err(Error::Param(format!("unknown bias tensor {other}"))),
        };
        *slot = b;
        Ok(())
    }
}

impl TensorSet for LstmParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        gate_tensors(
            [&self.w_f, &self.w_i, &self.w_c, &self.w_o],
            [&self.b_f, &self.b_i, &self.b_c, &self.b_o],
        )
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("W_f", self.w_f.as_mut_slice()),
            ("W_i", self.w_i.as_mut_slice()),
            ("W_c", self.w_c.as_mut_slice()),
            ("W_o", self.w_o.as_mut_slice()),
            ("b_f", self.b_f.as_mut_slice()),
            ("b_i", self.b_i.as_mut_slice()),
            ("b_c", self.b_c.as_mut_slice()),
            ("b_o", self.b_o.as_mut_slice()),
        ]
    }
}

impl TensorSet for LstmGrads {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        gate_tensors(
            [&self.w_f, &self.w_i, &self.w_c, &self.w_o],
            [&self.b_f, &self.b_i, &self.b_c, &self.b_o],
        )
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("W_f", self.w_f.as_mut_slice()),
            ("W_i", self.w_i.as_mut_slice()),
            ("W_c", self.w_c.as_mut_slice()),
            ("W_o", self.w_o.as_mut_slice()),
            ("b_f", self.b_f.as_mut_slice()),
            ("b_i", self.b_i.as_mut_slice()),
            ("b_c", self.b_c.as_mut_slice()),
            ("b_o", self.b_o.as_mut_slice()),
        ]
    }
}

fn gate_tensors<'a>(w: [&'a Matrix; 4], b: [&'a Vector; 4]) -> Vec<TensorRef<'a>> {
    let mut out = Vec::with_capacity(8);
    for (name, m) in TENSOR_NAMES[..4].iter().zip(w) {
        out.push(TensorRef {
            name,
            rows: m.rows(),
            cols: m.cols(),
            data: m.as_slice(),
        });
    }
    for (name, v) in TENSOR_NAMES[4..].iter().zip(b) {
        out.push(TensorRef {
            name,
            rows: v.len(),
            cols: 1,
            data: v.as_slice(),
        });
    }
    out
}

impl LstmGrads {
    pub fn zeros_like(p: &LstmParams) -> Self {
        let w = Matrix::zeros(p.hidden_dim, p.hidden_dim + p.input_dim);
        let b = Vector::zeros(p.hidden_dim);
        Self {
            w_f: w.clone(),
            w_i: w.clone(),
            w_c: w.clone(),
            w_o: w,
            b_f: b.clone(),
            b_i: b.clone(),
            b_c: b.clone(),
            b_o: b,
        }
    }

    /// `self += other`, tensor by tensor.
    pub fn accumulate(&mut self, other: &LstmGrads) {
        for ((_, dst), src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src.data) {
                *d += s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

fn gate(w: &Matrix, b: &Vector, z: &Vector) -> Result<Vector> {
    add(&matvec(w, z)?, b)
}

/// One LSTM step.
pub fn cell_forward(p: &LstmParams, prev: &LstmState, x: &Vector) -> Result<(LstmState, StepCache)> {
    if x.len() != p.input_dim {
        return Err(shape_err("cell_forward input", format!("vector[{}]", p.input_dim), x));
    }
    if prev.h.len() != p.hidden_dim || prev.c.len() != p.hidden_dim {
        return Err(shape_err(
            "cell_forward state",
            format!("vector[{}]", p.hidden_dim),
            format!("h {} / c {}", prev.h, prev.c),
        ));
    }
    let z = concat(&prev.h, x);
    let f = sigmoid(&gate(&p.w_f, &p.b_f, &z)?);
    let i = sigmoid(&gate(&p.w_i, &p.b_i, &z)?);
    let candidate = tanh_v(&gate(&p.w_c, &p.b_c, &z)?);
    let c = add(&hadamard(&f, &prev.c)?, &hadamard(&i, &candidate)?)?;
    let o = sigmoid(&gate(&p.w_o, &p.b_o, &z)?);
    let tanh_c = tanh_v(&c);
    let h = hadamard(&o, &tanh_c)?;
    let state = LstmState {
        h: h.clone(),
        c: c.clone(),
    };
    let cache = StepCache {
        x: x.clone(),
        z,
        f,
        i,
        candidate,
        c_prev: prev.c.clone(),
        c,
        o,
        tanh_c,
        h,
    };
    Ok((state, cache))
}

/// Folds [`cell_forward`] over `xs` from left to right.
pub fn sequence_forward(
    p: &LstmParams,
    init: &LstmState,
    xs: &[Vector],
) -> Result<(LstmState, Vec<StepCache>)> {
    let mut state = init.clone();
    let mut caches = Vec::with_capacity(xs.len());
    for x in xs {
        let (next, cache) = cell_forward(p, &state, x)?;
        state = next;
        caches.push(cache);
    }
    Ok((state, caches))
}

/// Backpropagation through time for a loss that depends only on the final
/// hidden state. `d_h_last` is ∂L/∂h_T; gradients flow back through both the
/// `h` and `C` recurrences with no truncation.
pub fn bptt(p: &LstmParams, caches: &[StepCache], d_h_last: &Vector) -> Result<LstmGrads> {
    if caches.is_empty() {
        return Err(Error::Usage("bptt needs at least one cached timestep".into()));
    }
    let hd = p.hidden_dim;
    if d_h_last.len() != hd {
        return Err(shape_err("bptt", format!("vector[{hd}]"), d_h_last));
    }
    let mut grads = LstmGrads::zeros_like(p);
    let mut dh = d_h_last.as_slice().to_vec();
    let mut dc = vec![0.0; hd];
    let mut da_f = vec![0.0; hd];
    let mut da_i = vec![0.0; hd];
    let mut da_c = vec![0.0; hd];
    let mut da_o = vec![0.0; hd];

    for step in caches.iter().rev() {
        for k in 0..hd {
            let (f, i, g, o) = (step.f[k], step.i[k], step.candidate[k], step.o[k]);
            let tc = step.tanh_c[k];
            dc[k] += dh[k] * o * (1.0 - tc * tc);
            da_o[k] = dh[k] * tc * o * (1.0 - o);
            da_f[k] = dc[k] * step.c_prev[k] * f * (1.0 - f);
            da_i[k] = dc[k] * g * i * (1.0 - i);
            da_c[k] = dc[k] * i * (1.0 - g * g);
        }
        let z = step.z.as_slice();
        grads.w_f.add_outer(&da_f, z);
        grads.w_i.add_outer(&da_i, z);
        grads.w_c.add_outer(&da_c, z);
        grads.w_o.add_outer(&da_o, z);
        for (dst, src) in [
            (&mut grads.b_f, &da_f),
            (&mut grads.b_i, &da_i),
            (&mut grads.b_c, &da_c),
            (&mut grads.b_o, &da_o),
        ] {
            dst.as_mut_slice().iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }

        let mut dz = vec![0.0; z.len()];
        p.w_f.add_transpose_matvec(&da_f, &mut dz);
        p.w_i.add_transpose_matvec(&da_i, &mut dz);
        p.w_c.add_transpose_matvec(&da_c, &mut dz);
        p.w_o.add_transpose_matvec(&da_o, &mut dz);
        dh.copy_from_slice(&dz[..hd]);
        dc.iter_mut().zip(step.f.iter()).for_each(|(d, f)| *d *= f);
    }

    if grads.all_finite() {
        Ok(grads)
    } else {
        Err(Error::NonFiniteValue("bptt"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::numerics::Rng;

    fn vec1(x: f64) -> Vector {
        Vector::new(vec![x]).unwrap()
    }

    #[test]
    fn zero_params_closed_form() {
        let p = LstmParams::zeros(3, 2);
        let x = Vector::new(vec![0.3, -1.2, 4.0]).unwrap();
        let (state, cache) = cell_forward(&p, &LstmState::zeros(2), &x).unwrap();
        for g in [&cache.f, &cache.i, &cache.o] {
            assert!(g.iter().all(|&v| v == 0.5));
        }
        assert!(cache.candidate.iter().all(|&v| v == 0.0));
        assert!(state.c.iter().all(|&v| v == 0.0));
        assert!(state.h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_params_with_prior_cell() {
        let p = LstmParams::zeros(1, 1);
        let prev = LstmState {
            h: vec1(0.0),
            c: vec1(2.0),
        };
        let (state, _) = cell_forward(&p, &prev, &vec1(0.9)).unwrap();
        assert!((state.c[0] - 1.0).abs() < 1e-12);
        assert!((state.h[0] - 0.3807970780).abs() < 1e-10);
    }

    #[test]
    fn open_forget_gate_keeps_cell() {
        let mut p = LstmParams::zeros(1, 1);
        p.set_bias("b_f", vec1(40.0)).unwrap();
        let prev = LstmState {
            h: vec1(0.0),
            c: vec1(1.5),
        };
        let (state, cache) = cell_forward(&p, &prev, &vec1(0.2)).unwrap();
        assert!(cache.f[0] > 1.0 - 1e-15);
        // input gate still half open, but candidate is tanh(0) = 0
        assert!((state.c[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let p = LstmParams::zeros(2, 3);
        assert!(matches!(
            cell_forward(&p, &LstmState::zeros(3), &vec1(1.0)),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(
            cell_forward(&p, &LstmState::zeros(2), &Vector::zeros(2)),
            Err(Error::Shape { .. })
        ));
        let bad = Matrix::zeros(3, 4);
        let ok = Matrix::zeros(3, 5);
        let b = Vector::zeros(3);
        assert!(LstmParams::new(2, 3, ok.clone(), bad, ok.clone(), ok, b.clone(), b.clone(), b.clone(), b).is_err());
    }

    #[test]
    fn sequence_forward_cases() {
        let p = LstmParams::init(2, 3, &mut Rng::new(11)).unwrap();
        let init = LstmState::zeros(3);
        let (s0, c0) = sequence_forward(&p, &init, &[]).unwrap();
        assert_eq!(s0, init);
        assert!(c0.is_empty());

        let xs: Vec<Vector> = (0..3)
            .map(|t| Vector::new(vec![t as f64 * 0.3, 1.0 - t as f64]).unwrap())
            .collect();
        let (s1, _) = sequence_forward(&p, &init, &xs[..1]).unwrap();
        assert_eq!(s1, cell_forward(&p, &init, &xs[0]).unwrap().0);

        let mut manual = init.clone();
        for x in &xs {
            manual = cell_forward(&p, &manual, x).unwrap().0;
        }
        let (s3, caches) = sequence_forward(&p, &init, &xs).unwrap();
        assert_eq!(caches.len(), 3);
        assert_eq!(s3.h.as_slice(), manual.h.as_slice());
        assert_eq!(s3.c.as_slice(), manual.c.as_slice());
        assert_eq!(sequence_forward(&p, &init, &xs).unwrap(), (s3, caches));

        let bad = vec![Vector::zeros(2), Vector::zeros(5)];
        assert!(sequence_forward(&p, &init, &bad).is_err());
    }

    #[test]
    fn bptt_edge_cases() {
        let p = LstmParams::init(2, 3, &mut Rng::new(4)).unwrap();
        assert!(matches!(bptt(&p, &[], &Vector::zeros(3)), Err(Error::Usage(_))));
        let xs = vec![Vector::new(vec![0.5, -0.5]).unwrap(); 4];
        let (_, caches) = sequence_forward(&p, &LstmState::zeros(3), &xs).unwrap();
        let g = bptt(&p, &caches, &Vector::zeros(3)).unwrap();
        assert!(g.tensors().iter().all(|t| t.data.iter().all(|&v| v == 0.0)));
        assert!(bptt(&p, &caches, &Vector::zeros(2)).is_err());
    }

    #[test]
    fn init_bounds_and_zero_bias() {
        let p = LstmParams::init(3, 4, &mut Rng::new(1)).unwrap();
        let bound = 1.0 / 7f64.sqrt();
        for w in p.weights() {
            assert_eq!(w.shape(), (4, 7));
            assert!(w.as_slice().iter().all(|v| v.abs() <= bound));
        }
        for b in p.biases() {
            assert!(b.iter().all(|&v| v == 0.0));
        }
        assert_eq!(p.param_count(), 4 * 4 * 7 + 4 * 4);
    }

    fn random_params(seed: u64, input_dim: usize, hidden_dim: usize, scale: f64) -> LstmParams {
        let mut rng = Rng::new(seed);
        let mut p = LstmParams::zeros(input_dim, hidden_dim);
        for (_, t) in p.tensors_mut() {
            t.iter_mut().for_each(|v| *v = rng.uniform(-scale, scale));
        }
        p
    }

    fn gate_run(seed: u64, input_dim: usize, hidden_dim: usize, scale: f64) -> Vec<StepCache> {
        let p = random_params(seed, input_dim, hidden_dim, scale);
        let mut rng = Rng::new(seed ^ 0xABCD);
        let xs: Vec<Vector> = (0..6)
            .map(|_| Vector::new((0..input_dim).map(|_| rng.uniform(-3.0, 3.0)).collect()).unwrap())
            .collect();
        sequence_forward(&p, &LstmState::zeros(hidden_dim), &xs).unwrap().1
    }

    proptest! {
        // Pre-activations stay below ~17 here, inside the range where f64
        // sigmoid and tanh have not yet rounded onto their asymptotes.
        #[test]
        fn gates_stay_in_open_intervals(
            seed in any::<u64>(),
            input_dim in 1usize..6,
            hidden_dim in 1usize..6,
            scale in 0.01f64..0.8,
        ) {
            for c in gate_run(seed, input_dim, hidden_dim, scale) {
                for g in [&c.f, &c.i, &c.o] {
                    prop_assert!(g.iter().all(|&v| v > 0.0 && v < 1.0));
                }
                prop_assert!(c.candidate.iter().all(|&v| v > -1.0 && v < 1.0));
                prop_assert!(c.h.iter().all(|&v| v > -1.0 && v < 1.0));
            }
        }

        #[test]
        fn saturated_gates_stay_bounded(
            seed in any::<u64>(),
            input_dim in 1usize..6,
            hidden_dim in 1usize..6,
            scale in 1.0f64..200.0,
        ) {
            for c in gate_run(seed, input_dim, hidden_dim, scale) {
                for g in [&c.f, &c.i, &c.o] {
                    prop_assert!(g.iter().all(|&v| (0.0..=1.0).contains(&v)));
                }
                prop_assert!(c.candidate.iter().chain(c.h.iter()).all(|&v| (-1.0..=1.0).contains(&v)));
            }
        }
    }
}
