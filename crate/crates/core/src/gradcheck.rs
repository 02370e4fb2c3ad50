//! Central finite-difference gradient checking.
//!
//! Works only through forward evaluations of a scalar function, so it is an
//! independent oracle for the tape's backward rules.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Reduction, Tape, Var};
use crate::error::Result;
use crate::graph::Graph;
use crate::layers::{GraphOps, Model, Session};
use crate::losses::{decoupling_loss, final_loss, semi_supervised_loss};
use crate::tensor::Matrix;
use crate::{seeded_rng, RngStream};

/// Finite-difference settings.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub step: f64,
    /// Lower bound on the denominator of the relative error, so entries whose
    /// true gradient is (numerically) zero are compared absolutely.
    pub floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-6,
        }
    }
}

impl GradCheck {
    /// Central-difference estimate of `∂f/∂x` at `x`.
    pub fn numeric_gradient(&self, x: &Matrix<f64>, mut f: impl FnMut(&Matrix<f64>) -> f64) -> Matrix<f64> {
        let mut probe = x.clone();
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for k in 0..x.len() {
            let orig = probe.as_slice()[k];
            probe.as_mut_slice()[k] = orig + self.step;
            let up = f(&probe);
            probe.as_mut_slice()[k] = orig - self.step;
            let down = f(&probe);
            probe.as_mut_slice()[k] = orig;
            out.as_mut_slice()[k] = (up - down) / (2.0 * self.step);
        }
        out
    }

    /// `max_k |a_k - n_k| / max(|a_k|, |n_k|, floor)`.
    pub fn max_relative_error(&self, analytic: &Matrix<f64>, numeric: &Matrix<f64>) -> f64 {
        assert_eq!(analytic.shape(), numeric.shape());
        analytic
            .as_slice()
            .iter()
            .zip(numeric.as_slice())
            .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(self.floor))
            .fold(0.0, f64::max)
    }

    /// Convenience: numeric gradient of `f` at `x` compared against `analytic`.
    pub fn check(&self, x: &Matrix<f64>, analytic: &Matrix<f64>, f: impl FnMut(&Matrix<f64>) -> f64) -> f64 {
        let numeric = self.numeric_gradient(x, f);
        self.max_relative_error(analytic, &numeric)
    }

    /// Checks the gradient of `Σ (f(inputs) ⊙ W)` with respect to every
    /// input, for a fixed random `W` drawn from `seed`. Returns the worst
    /// relative error.
    pub fn op_error(
        &self,
        inputs: &[Matrix<f64>],
        seed: u64,
        f: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
    ) -> Result<f64> {
        let weights = {
            let mut t = Tape::new();
            let vars: Vec<Var> = inputs.iter().map(|m| t.constant(m.clone())).collect();
            let out = f(&mut t, &vars)?;
            let (r, c) = t.shape(out);
            Matrix::uniform(r, c, -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
        };
        let eval = |ms: &[Matrix<f64>], grads: bool| -> Result<(f64, Vec<Option<Matrix<f64>>>)> {
            let mut t = Tape::new();
            let vars: Vec<Var> = ms
                .iter()
                .map(|m| if grads { t.param(m.clone()) } else { t.constant(m.clone()) })
                .collect();
            let out = f(&mut t, &vars)?;
            let w = t.constant(weights.clone());
            let prod = t.mul(out, w)?;
            let loss = t.sum(prod)?;
            let value = t.scalar(loss)?;
            if grads {
                t.backward(loss)?;
            }
            Ok((value, vars.iter().map(|&v| t.grad(v).cloned()).collect()))
        };
        let (_, analytic) = eval(inputs, true)?;
        let mut worst = 0.0f64;
        for (k, input) in inputs.iter().enumerate() {
            let a = analytic[k]
                .clone()
                .unwrap_or_else(|| Matrix::zeros(input.rows(), input.cols()));
            let mut failure = None;
            let err = self.check(input, &a, |probe| {
                let mut ms = inputs.to_vec();
                ms[k] = probe.clone();
                eval(&ms, false).map(|r| r.0).unwrap_or_else(|e| {
                    failure = Some(e);
                    f64::NAN
                })
            });
            if let Some(e) = failure {
                return Err(e);
            }
            worst = worst.max(err);
        }
        Ok(worst)
    }

    /// Checks every parameter gradient of the training loss
    /// `CE(train) + λ·decouple` of `model` in training mode. Dropout masks are
    /// redrawn from the same seed on each evaluation, so set dropout to 0 for
    /// a smooth objective. Returns the worst relative error and the name of
    /// the parameter where it occurred.
    pub fn model_error(
        &self,
        model: &Model<f64>,
        ops: &GraphOps<f64>,
        graph: &Graph<f64>,
        mask: &[bool],
        lambda: f64,
    ) -> Result<(f64, String)> {
        let loss = |m: &Model<f64>, grads: bool| -> Result<(f64, Vec<Matrix<f64>>)> {
            let mut rng = seeded_rng(0, RngStream::Training);
            let mut sess = if grads {
                Session::with_gradients(m.params(), true, &mut rng)
            } else {
                Session::new(m.params(), true, &mut rng)
            };
            let x = sess.tape.constant_shared(graph.shared_features());
            let out = m.forward(&mut sess, ops, x)?;
            let semi = semi_supervised_loss(&mut sess.tape, out.logits, graph.labels(), mask, Reduction::Sum)?;
            let dec = decoupling_loss(&mut sess.tape, &out.states, false)?;
            let total = final_loss(&mut sess.tape, semi, dec, lambda)?;
            let value = sess.tape.scalar(total)?;
            if !grads {
                return Ok((value, Vec::new()));
            }
            sess.tape.backward(total)?;
            Ok((value, sess.param_grads(m.params())))
        };
        let (_, analytic) = loss(model, true)?;
        let mut worst = (0.0f64, String::new());
        for id in model.params().ids() {
            let k = id.index();
            let mut failure = None;
            let err = self.check(&model.params().values()[k], &analytic[k], |probe| {
                let mut m = model.clone();
                *m.params_mut().get_mut(id) = probe.clone();
                loss(&m, false).map(|r| r.0).unwrap_or_else(|e| {
                    failure = Some(e);
                    f64::NAN
                })
            });
            if let Some(e) = failure {
                return Err(e);
            }
            if !(err <= worst.0) {
                worst = (err, model.params().name(id).to_string());
            }
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_gradient() {
        let x = Matrix::from_rows(&[[0.5, -1.0, 2.0]]);
        let analytic = x.map(|v| 3.0 * v * v);
        let err = GradCheck::default().check(&x, &analytic, |m| m.as_slice().iter().map(|v| v * v * v).sum());
        assert!(err < 1e-8, "{err}");
    }
}
