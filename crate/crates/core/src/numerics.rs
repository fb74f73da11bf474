//! Dense row-major linear algebra, elementwise activations and a seedable
//! generator. Everything numeric in the crate goes through these types.

use std::fmt;

use crate::error::{shape_err, Error, Result};

/// A dense vector of finite `f64` values.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Vector(Vec<f64>);

impl Vector {
    /// Wraps `data`, rejecting NaN and infinities.
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.iter().all(|v| v.is_finite()) {
            Ok(Self(data))
        } else {
            Err(Error::NonFiniteValue("Vector::new"))
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn filled(len: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    /// Mutable access for in-crate kernels that preserve finiteness.
    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    /// Wraps data produced by an in-crate kernel and checks it.
    pub(crate) fn checked(data: Vec<f64>, op: &'static str) -> Result<Self> {
        if data.iter().all(|v| v.is_finite()) {
            Ok(Self(data))
        } else {
            Err(Error::NonFiniteValue(op))
        }
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Display for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "vector[{}]", self.0.len())
    }
}

/// A dense row-major matrix of finite `f64` values.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_err(
                "Matrix::new",
                format!("{rows}x{cols}"),
                format!("{} values", data.len()),
            ));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteValue("Matrix::new"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(shape_err("Matrix::from_rows", cols, bad.len()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `self += a ⊗ b` where `a` has `rows` entries and `b` has `cols`.
    pub(crate) fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (row, &ai) in self.data.chunks_exact_mut(self.cols).zip(a) {
            for (dst, &bj) in row.iter_mut().zip(b) {
                *dst += ai * bj;
            }
        }
    }

    /// `out += selfᵀ · v`.
    pub(crate) fn add_transpose_matvec(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (row, &vi) in self.data.chunks_exact(self.cols).zip(v) {
            for (dst, &m) in out.iter_mut().zip(row) {
                *dst += m * vi;
            }
        }
    }
}

impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "matrix[{}x{}]", self.rows, self.cols)
    }
}

/// `m · v`.
pub fn matvec(m: &Matrix, v: &Vector) -> Result<Vector> {
    if m.cols != v.len() {
        return Err(shape_err("matvec", m, v));
    }
    let out = if m.cols == 0 {
        vec![0.0; m.rows]
    } else {
        m.data
            .chunks_exact(m.cols)
            .map(|row| row.iter().zip(v.as_slice()).map(|(a, b)| a * b).sum())
            .collect()
    };
    Vector::checked(out, "matvec")
}

/// `[a, b]`: the values of `a` followed by the values of `b`.
pub fn concat(a: &Vector, b: &Vector) -> Vector {
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.as_slice());
    data.extend_from_slice(b.as_slice());
    Vector(data)
}

/// Logistic function in the branch form that never overflows.
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(v: &Vector) -> Vector {
    Vector(v.iter().copied().map(sigmoid_scalar).collect())
}

pub fn tanh_v(v: &Vector) -> Vector {
    Vector(v.iter().map(|x| x.tanh()).collect())
}

/// Elementwise product.
pub fn hadamard(a: &Vector, b: &Vector) -> Result<Vector> {
    if a.len() != b.len() {
        return Err(shape_err("hadamard", a, b));
    }
    Vector::checked(
        a.iter().zip(b.iter()).map(|(x, y)| x * y).collect(),
        "hadamard",
    )
}

/// Elementwise sum.
pub fn add(a: &Vector, b: &Vector) -> Result<Vector> {
    if a.len() != b.len() {
        return Err(shape_err("add", a, b));
    }
    Vector::checked(a.iter().zip(b.iter()).map(|(x, y)| x + y).collect(), "add")
}

/// A `rows × cols` matrix with entries drawn uniformly from `[lo, hi)`.
pub fn rand_uniform(rng: &mut Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Result<Matrix> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Param(format!("uniform bounds must satisfy lo < hi, got [{lo}, {hi})")));
    }
    let data = (0..rows * cols).map(|_| rng.uniform(lo, hi)).collect();
    Matrix::new(rows, cols, data)
}

/// SplitMix64 (Steele, Lea and Flood, 2014).
///
/// State advances by the odd constant `0x9E37_79B9_7F4A_7C15`; each output is
/// the state passed through the variant-13 finalizer. The whole algorithm is
/// the few lines below, so sequences are identical on every platform.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rng {
    seed: u64,
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { seed, state: seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`. Rounding can land exactly on `hi` for very
    /// narrow intervals; such draws fold back to `lo`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let v = lo + (hi - lo) * self.next_f64();
        if v < hi {
            v
        } else {
            lo
        }
    }

    /// Uniform integer in `0..n` (Lemire's multiply-shift with rejection).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "Rng::below needs a positive bound");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::numerics::Rng;

    fn v(data: &[f64]) -> Vector {
        Vector::new(data.to_vec()).unwrap()
    }

    // Scalar triple-loop reference, deliberately written without iterators.
    #[allow(clippy::needless_range_loop)]
    fn naive_matvec(m: &Matrix, x: &Vector) -> Vec<f64> {
        let mut out = vec![0.0; m.rows()];
        for i in 0..m.rows() {
            let mut acc = 0.0;
            for j in 0..m.cols() {
                acc += m.get(i, j) * x[j];
            }
            out[i] = acc;
        }
        out
    }

    #[test]
    fn matvec_examples() {
        assert_eq!(matvec(&Matrix::identity(2), &v(&[3.0, 4.0])).unwrap(), v(&[3.0, 4.0]));
        assert_eq!(matvec(&Matrix::zeros(2, 3), &v(&[1.0, -2.0, 9.0])).unwrap(), v(&[0.0, 0.0]));
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(matvec(&m, &v(&[1.0, 1.0])).unwrap(), v(&[3.0, 7.0]));
    }

    #[test]
    fn matvec_shape_error_names_both_shapes() {
        let err = matvec(&Matrix::zeros(2, 3), &v(&[1.0, 2.0])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("vector[2]"), "{msg}");
    }

    #[test]
    fn matvec_overflow_is_rejected() {
        let m = Matrix::new(1, 2, vec![1e308, 1e308]).unwrap();
        assert!(matches!(
            matvec(&m, &v(&[10.0, 10.0])),
            Err(Error::NonFiniteValue(_))
        ));
    }

    #[test]
    fn concat_examples() {
        assert_eq!(concat(&v(&[1.0]), &v(&[2.0, 3.0])), v(&[1.0, 2.0, 3.0]));
        assert_eq!(concat(&v(&[]), &v(&[5.0])), v(&[5.0]));
        assert_eq!(concat(&v(&[0.5, -0.5]), &v(&[0.25])), v(&[0.5, -0.5, 0.25]));
    }

    #[test]
    fn activation_examples() {
        assert_eq!(sigmoid(&v(&[0.0]))[0], 0.5);
        let big = sigmoid(&v(&[1000.0]))[0];
        assert!(big.is_finite() && (big - 1.0).abs() < 1e-15);
        assert!((sigmoid(&v(&[1.0]))[0] - 0.7310585786).abs() < 1e-10);

        assert_eq!(tanh_v(&v(&[0.0]))[0], 0.0);
        assert_eq!(tanh_v(&v(&[-0.7]))[0], -tanh_v(&v(&[0.7]))[0]);
        assert!((tanh_v(&v(&[1.0]))[0] - 0.7615941560).abs() < 1e-10);
    }

    #[test]
    fn activations_survive_extreme_inputs() {
        let x = v(&[-1e308, -745.0, -1.0, 0.0, 1.0, 745.0, 1e308]);
        for out in [sigmoid(&x), tanh_v(&x)] {
            assert!(out.iter().all(|y| y.is_finite()));
        }
        assert_eq!(sigmoid(&x)[0], 0.0);
        assert_eq!(sigmoid(&x)[6], 1.0);
    }

    #[test]
    fn hadamard_examples() {
        assert_eq!(hadamard(&v(&[1.0, 1.0]), &v(&[2.5, -3.0])).unwrap(), v(&[2.5, -3.0]));
        assert_eq!(hadamard(&v(&[0.0, 0.0]), &v(&[7.0, 8.0])).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(hadamard(&v(&[0.5, 2.0]), &v(&[4.0, 0.5])).unwrap(), v(&[2.0, 1.0]));
        assert!(matches!(hadamard(&v(&[1.0]), &v(&[1.0, 2.0])), Err(Error::Shape { .. })));
    }

    #[test]
    fn rand_uniform_contracts() {
        let a = rand_uniform(&mut Rng::new(7), 4, 5, -1.0, 1.0).unwrap();
        let b = rand_uniform(&mut Rng::new(7), 4, 5, -1.0, 1.0).unwrap();
        assert_eq!(a, b);
        let c = rand_uniform(&mut Rng::new(8), 4, 5, -1.0, 1.0).unwrap();
        assert_ne!(a, c);

        let hi = 1.0;
        let lo = hi - f64::EPSILON;
        let narrow = rand_uniform(&mut Rng::new(3), 10, 10, lo, hi).unwrap();
        assert!(narrow.as_slice().iter().all(|&x| x >= lo && x < hi));

        assert!(matches!(rand_uniform(&mut Rng::new(1), 1, 1, 1.0, 1.0), Err(Error::Param(_))));
        assert!(matches!(rand_uniform(&mut Rng::new(1), 1, 1, 2.0, 1.0), Err(Error::Param(_))));
    }

    #[test]
    fn splitmix_reference_values() {
        // First outputs for seed 1234567 from the public SplitMix64 reference.
        let mut rng = Rng::new(1234567);
        assert_eq!(rng.next_u64(), 6457827717110365317);
        assert_eq!(rng.next_u64(), 3203168211198807973);
    }

    #[test]
    fn rng_prefixes_match() {
        let mut a = Rng::new(99);
        let mut b = Rng::new(99);
        for _ in 0..10_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut items: Vec<usize> = (0..50).collect();
        Rng::new(5).shuffle(&mut items);
        let mut sorted = items.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(items, sorted);
    }

    fn matrix_and_vector() -> impl Strategy<Value = (Matrix, Vector)> {
        (0usize..12, 0usize..12).prop_flat_map(|(r, c)| {
            (
                prop::collection::vec(-1e3..1e3f64, r * c),
                prop::collection::vec(-1e3..1e3f64, c),
            )
                .prop_map(move |(m, x)| (Matrix::new(r, c, m).unwrap(), Vector::new(x).unwrap()))
        })
    }

    proptest! {
        #[test]
        fn matvec_matches_scalar_loop((m, x) in matrix_and_vector()) {
            let fast = matvec(&m, &x).unwrap();
            let slow = naive_matvec(&m, &x);
            prop_assert_eq!(fast.len(), m.rows());
            for (a, b) in fast.iter().zip(&slow) {
                let scale = a.abs().max(b.abs()).max(1e-300);
                prop_assert!((a - b).abs() / scale <= 1e-12 || (a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn activations_are_monotone(mut xs in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, 2..40)) {
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let x = Vector::new(xs).unwrap();
            for out in [sigmoid(&x), tanh_v(&x)] {
                prop_assert!(out.iter().all(|y| !y.is_nan()));
                prop_assert!(out.as_slice().windows(2).all(|w| w[0] <= w[1]));
            }
        }

        #[test]
        fn concat_length(a in prop::collection::vec(-1.0..1.0f64, 0..100), b in prop::collection::vec(-1.0..1.0f64, 0..100)) {
            let out = concat(&Vector::new(a.clone()).unwrap(), &Vector::new(b.clone()).unwrap());
            prop_assert_eq!(out.len(), a.len() + b.len());
            prop_assert_eq!(&out.as_slice()[..a.len()], &a[..]);
        }
    }
}
