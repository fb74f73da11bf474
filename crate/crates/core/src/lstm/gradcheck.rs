use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::numerics::{Rng, Vector};
use crate::parallel::{self, Parallelism};
use crate::tensors::TensorSet;

use super::{bptt, sequence_forward, LstmParams, LstmState};

/// A scalar loss on the final hidden state.
pub trait HiddenLoss: Sync {
    fn value(&self, h: &Vector) -> f64;
    fn grad(&self, h: &Vector) -> Vector;
}

/// `½‖h‖²`
#[derive(Clone, Copy, Debug, Default)]
pub struct SquaredNorm;

impl HiddenLoss for SquaredNorm {
    fn value(&self, h: &Vector) -> f64 {
        0.5 * h.iter().map(|v| v * v).sum::<f64>()
    }

    fn grad(&self, h: &Vector) -> Vector {
        h.clone()
    }
}

/// Multiplies one analytic gradient tensor before comparison. Test hook for
/// proving the checker can fail.
#[derive(Clone, Debug, PartialEq)]
pub struct InjectedFault {
    pub tensor: String,
    pub factor: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    pub threshold: f64,
    pub fault: Option<InjectedFault>,
    pub parallelism: Parallelism,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            threshold: 1e-5,
            fault: None,
            parallelism: Parallelism::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorError {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorError>,
    pub threshold: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.max_rel_error <= self.threshold)
    }

    pub fn failing(&self) -> Vec<&TensorError> {
        self.tensors
            .iter()
            .filter(|t| t.max_rel_error > self.threshold)
            .collect()
    }

    pub fn max_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    /// `tensor,max_rel_error,worst_index,analytic,numeric,pass`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tensor,max_rel_error,worst_index,analytic,numeric,pass\n");
        for t in &self.tensors {
            let _ = writeln!(
                out,
                "{},{:e},{},{:?},{:?},{}",
                t.name,
                t.max_rel_error,
                t.worst_index,
                t.analytic,
                t.numeric,
                t.max_rel_error <= self.threshold
            );
        }
        out
    }
}

/// A random cell and input sequence for gradient checking. Every weight and
/// bias is uniform in ±0.5 so all gates are exercised; inputs are uniform
/// in ±1. Parameters are drawn before inputs from one generator.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckProblem {
    pub params: LstmParams,
    pub inputs: Vec<Vector>,
}

impl GradCheckProblem {
    pub fn random(seed: u64, input_dim: usize, hidden_dim: usize, steps: usize) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || steps == 0 {
            return Err(Error::Param(format!(
                "gradient check needs positive dims and steps, got input {input_dim}, hidden {hidden_dim}, steps {steps}"
            )));
        }
        let mut rng = Rng::new(seed);
        let mut params = LstmParams::zeros(input_dim, hidden_dim);
        for (_, t) in params.tensors_mut() {
            t.iter_mut().for_each(|v| *v = rng.uniform(-0.5, 0.5));
        }
        let inputs = (0..steps)
            .map(|_| Vector::new((0..input_dim).map(|_| rng.uniform(-1.0, 1.0)).collect()))
            .collect::<Result<_>>()?;
        Ok(Self { params, inputs })
    }

    pub fn check(&self, opts: &GradCheckOptions) -> Result<GradCheckReport> {
        grad_check(&self.params, &self.inputs, &SquaredNorm, opts)
    }
}

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn loss_at(p: &LstmParams, xs: &[Vector], loss: &dyn HiddenLoss) -> Result<f64> {
    let (state, _) = sequence_forward(p, &LstmState::zeros(p.hidden_dim()), xs)?;
    Ok(loss.value(&state.h))
}

/// Compares BPTT gradients against central finite differences for every
/// parameter, starting from a zero state.
pub fn grad_check(
    p: &LstmParams,
    xs: &[Vector],
    loss: &dyn HiddenLoss,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let hd = p.hidden_dim();
    let (state, caches) = sequence_forward(p, &LstmState::zeros(hd), xs)?;
    let mut analytic = bptt(p, &caches, &loss.grad(&state.h))?;
    if let Some(fault) = &opts.fault {
        for (name, t) in analytic.tensors_mut() {
            if name == fault.tensor {
                t.iter_mut().for_each(|v| *v *= fault.factor);
            }
        }
    }

    // (tensor, element) for every parameter, in canonical order.
    let coords: Vec<(usize, usize)> = p
        .tensors()
        .iter()
        .enumerate()
        .flat_map(|(ti, t)| (0..t.data.len()).map(move |ei| (ti, ei)))
        .collect();
    let eps = opts.epsilon;
    let numeric = parallel::map(opts.parallelism, &coords, |&(ti, ei)| -> Result<f64> {
        let mut probe = p.clone();
        let original = probe.tensors()[ti].data[ei];
        probe.tensors_mut()[ti].1[ei] = original + eps;
        let plus = loss_at(&probe, xs, loss)?;
        probe.tensors_mut()[ti].1[ei] = original - eps;
        let minus = loss_at(&probe, xs, loss)?;
        Ok((plus - minus) / (2.0 * eps))
    });

    let mut tensors: Vec<TensorError> = analytic
        .tensors()
        .iter()
        .map(|t| TensorError {
            name: t.name,
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        })
        .collect();
    let analytic_views = analytic.tensors();
    for (&(ti, ei), n) in coords.iter().zip(numeric) {
        let n = n?;
        let a = analytic_views[ti].data[ei];
        let err = relative_error(a, n);
        let entry = &mut tensors[ti];
        if err > entry.max_rel_error {
            entry.max_rel_error = err;
            entry.worst_index = ei;
            entry.analytic = a;
            entry.numeric = n;
        }
    }
    Ok(GradCheckReport {
        tensors,
        threshold: opts.threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant;

    impl HiddenLoss for Constant {
        fn value(&self, _: &Vector) -> f64 {
            3.0
        }
        fn grad(&self, h: &Vector) -> Vector {
            Vector::zeros(h.len())
        }
    }

    fn inputs(rng: &mut Rng, steps: usize, dim: usize) -> Vec<Vector> {
        (0..steps)
            .map(|_| Vector::new((0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap())
            .collect()
    }

    #[test]
    fn relative_error_definition() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(2.0, 1.0), 0.5);
        assert_eq!(relative_error(1e-10, 0.0), 1e-10 / 1e-8);
    }

    #[test]
    fn constant_loss_on_zero_model() {
        let p = LstmParams::zeros(2, 2);
        let xs = inputs(&mut Rng::new(1), 3, 2);
        let report = grad_check(&p, &xs, &Constant, &GradCheckOptions::default()).unwrap();
        assert_eq!(report.tensors.len(), 8);
        assert!(report.tensors.iter().all(|t| t.max_rel_error == 0.0));
    }

    #[test]
    fn single_step_scalar_cell() {
        let opts = GradCheckOptions {
            threshold: 1e-6,
            ..Default::default()
        };
        let report = GradCheckProblem::random(3, 1, 1, 1).unwrap().check(&opts).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn seed_42_five_steps() {
        let report = GradCheckProblem::random(42, 3, 4, 5)
            .unwrap()
            .check(&GradCheckOptions::default())
            .unwrap();
        assert!(report.passed(), "{report:?}");
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 9);
        assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
    }

    #[test]
    fn corrupted_forget_weights_are_flagged() {
        let opts = GradCheckOptions {
            fault: Some(InjectedFault {
                tensor: "W_f".into(),
                factor: 2.0,
            }),
            ..Default::default()
        };
        let report = GradCheckProblem::random(42, 3, 4, 5).unwrap().check(&opts).unwrap();
        let failing: Vec<_> = report.failing().iter().map(|t| t.name).collect();
        assert_eq!(failing, vec!["W_f"]);
    }

    #[test]
    fn sequential_and_parallel_reports_agree() {
        let problem = GradCheckProblem::random(9, 2, 3, 4).unwrap();
        let run = |parallelism| {
            let opts = GradCheckOptions {
                parallelism,
                ..Default::default()
            };
            problem.check(&opts).unwrap()
        };
        assert_eq!(run(Parallelism::Sequential), run(Parallelism::Parallel));
        assert!(GradCheckProblem::random(1, 0, 3, 4).is_err());
    }
}
