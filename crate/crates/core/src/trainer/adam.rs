use crate::error::{check_shape, Result};
use crate::tensor::Matrix;
use crate::Scalar;

/// Adam with bias correction. Weight decay is added to the gradient
/// (`g + wd·θ`) before the moment updates, i.e. classic L2 rather than
/// decoupled decay.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    state: AdamState<T>,
}

/// First/second moment estimates and the step counter.
#[derive(Debug, Clone, Default)]
pub struct AdamState<T> {
    pub m: Vec<Matrix<T>>,
    pub v: Vec<Matrix<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn zeros_like(params: &[Matrix<T>]) -> Self {
        Self {
            m: params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect(),
            v: params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect(),
            t: 0,
        }
    }
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64, weight_decay: f64, params: &[Matrix<T>]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            state: AdamState::zeros_like(params),
        }
    }

    pub fn state(&self) -> &AdamState<T> {
        &self.state
    }

    pub fn step(&mut self, params: &mut [Matrix<T>], grads: &[Matrix<T>]) -> Result<()> {
        adam_step(
            params,
            grads,
            &mut self.state,
            self.lr,
            self.beta1,
            self.beta2,
            self.eps,
            self.weight_decay,
        )
    }
}

#[allow(clippy::too_many_arguments)]
pub fn adam_step<T: Scalar>(
    params: &mut [Matrix<T>],
    grads: &[Matrix<T>],
    state: &mut AdamState<T>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        return Err(crate::Error::InvalidArgument(format!(
            "{} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), (m, v)) in params.iter().zip(grads).zip(state.m.iter().zip(&state.v)) {
        check_shape("adam_step", p.shape(), g.shape())?;
        check_shape("adam_step", p.shape(), m.shape())?;
        check_shape("adam_step", p.shape(), v.shape())?;
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    let (b1, b2, wd) = (T::lit(beta1), T::lit(beta2), T::lit(weight_decay));
    let (one, step, eps) = (T::one(), T::lit(lr / bc1), T::lit(eps));
    let inv_bc2 = T::lit(1.0 / bc2);

    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let pv = p.as_mut_slice();
        let (mv, vv) = (m.as_mut_slice(), v.as_mut_slice());
        for k in 0..pv.len() {
            let grad = g.as_slice()[k] + wd * pv[k];
            mv[k] = b1 * mv[k] + (one - b1) * grad;
            vv[k] = b2 * vv[k] + (one - b2) * grad * grad;
            pv[k] = pv[k] - step * mv[k] / ((vv[k] * inv_bc2).sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut params = vec![Matrix::<f64>::from_rows(&[[1.0, -2.0]])];
        let grads = vec![Matrix::zeros(1, 2)];
        let mut opt = Adam::new(0.05, 0.0, &params);
        opt.step(&mut params, &grads).unwrap();
        assert_eq!(params[0], Matrix::from_rows(&[[1.0, -2.0]]));
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = g, v̂ = g², so the update is lr·g/(|g| + eps) ≈ lr
        let mut params = vec![Matrix::<f64>::from_rows(&[[3.0]])];
        let mut opt = Adam::new(0.05, 0.0, &params);
        opt.step(&mut params, &[Matrix::from_rows(&[[1.0]])]).unwrap();
        let expected = 3.0 - 0.05 * 1.0 / (1.0 + 1e-8);
        assert!((params[0][(0, 0)] - expected).abs() < 1e-15);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(θ) = Σ (θ - c)², gradient 2(θ - c)
        let target = Matrix::<f64>::from_rows(&[[1.5, -0.5, 3.0]]);
        let mut params = vec![Matrix::zeros(1, 3)];
        let mut opt = Adam::new(0.05, 0.0, &params);
        let mut steps = 0;
        while params[0].max_abs_diff(&target) > 1e-6 && steps < 2000 {
            let g = params[0].zip_map(&target, |p, c| 2.0 * (p - c));
            opt.step(&mut params, &[g]).unwrap();
            steps += 1;
        }
        assert!(params[0].max_abs_diff(&target) <= 1e-6, "after {steps} steps");
    }

    #[test]
    fn weight_decay_shrinks_without_gradient() {
        let mut params = vec![Matrix::<f64>::from_rows(&[[2.0]])];
        let mut opt = Adam::new(0.01, 0.5, &params);
        opt.step(&mut params, &[Matrix::zeros(1, 1)]).unwrap();
        assert!(params[0][(0, 0)] < 2.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut params = vec![Matrix::<f64>::zeros(2, 2)];
        let mut opt = Adam::new(0.01, 0.0, &params);
        assert!(opt.step(&mut params, &[Matrix::zeros(1, 2)]).is_err());
    }
}
