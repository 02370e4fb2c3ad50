//! Training objectives and evaluation metrics.

use crate::autodiff::{Reduction, Tape, Var};
use crate::error::{Error, Result};
use crate::layers::LayerState;
use crate::tensor::Matrix;
use crate::Scalar;

/// Denominator clamp for the cosine terms of the decoupling loss.
pub const COSINE_EPS: f64 = 1e-8;

/// Cross-entropy of the softmax classifier over the labelled nodes in `train_mask`.
pub fn semi_supervised_loss<T: Scalar>(
    tape: &mut Tape<T>,
    logits: Var,
    labels: &[usize],
    train_mask: &[bool],
    reduction: Reduction,
) -> Result<Var> {
    tape.softmax_cross_entropy(logits, labels, train_mask, reduction)
}

/// `Σ_layers Σ_nodes |cos(C_i^l, H_i^l)|` over the given states.
///
/// States without a memory cell are skipped. `states[0]` (the initial
/// projection, where `C = H`) contributes only when `include_layer0` is set.
/// Returns a zero constant when nothing is included.
pub fn decoupling_loss<T: Scalar>(tape: &mut Tape<T>, states: &[LayerState], include_layer0: bool) -> Result<Var> {
    let skip = usize::from(!include_layer0);
    let mut total: Option<Var> = None;
    for state in states.iter().skip(skip) {
        let Some(memory) = state.memory else { continue };
        let cos = tape.cosine_similarity_rows(memory, state.hidden, T::lit(COSINE_EPS))?;
        let abs = tape.abs(cos)?;
        let term = tape.sum(abs)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, term)?,
            None => term,
        });
    }
    Ok(match total {
        Some(v) => v,
        None => tape.constant(Matrix::zeros(1, 1)),
    })
}

/// `semi + λ · decouple`.
pub fn final_loss<T: Scalar>(tape: &mut Tape<T>, semi: Var, decouple: Var, lambda: f64) -> Result<Var> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("regularisation weight {lambda} must be >= 0")));
    }
    if lambda == 0.0 {
        return Ok(semi);
    }
    let weighted = tape.scale(decouple, T::lit(lambda))?;
    tape.add(semi, weighted)
}

/// Fraction of masked nodes whose arg-max logit equals the label. Ties go to
/// the lowest class index.
pub fn accuracy<T: Scalar>(logits: &Matrix<T>, labels: &[usize], mask: &[bool]) -> Result<f64> {
    let predicted = logits.argmax_rows();
    let (mut hit, mut total) = (0usize, 0usize);
    for (i, &m) in mask.iter().enumerate() {
        if m {
            total += 1;
            if predicted[i] == labels[i] {
                hit += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(hit as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_cases() {
        let logits = Matrix::<f64>::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]);
        let all = [true; 5];
        assert_eq!(accuracy(&logits, &[0, 1, 0, 1, 0], &all).unwrap(), 1.0);
        assert_eq!(accuracy(&logits, &[1, 0, 1, 0, 1], &all).unwrap(), 0.0);
        // hand count: rows 0, 1 and 4 (tie -> class 0) right; rows 2, 3 wrong
        assert_eq!(accuracy(&logits, &[0, 1, 1, 0, 0], &all).unwrap(), 0.6);
        assert!(matches!(accuracy(&logits, &[0; 5], &[false; 5]), Err(Error::EmptyMask)));
    }

    #[test]
    fn final_loss_rejects_negative_lambda() {
        let mut t = Tape::<f64>::new();
        let a = t.constant(Matrix::zeros(1, 1));
        assert!(final_loss(&mut t, a, a, -0.1).is_err());
    }

    #[test]
    fn final_loss_weights() {
        let mut t = Tape::<f64>::new();
        let semi = t.constant(Matrix::filled(1, 1, 2.0));
        let dec = t.constant(Matrix::filled(1, 1, 3.0));
        let l0 = final_loss(&mut t, semi, dec, 0.0).unwrap();
        let l1 = final_loss(&mut t, semi, dec, 1.0).unwrap();
        assert_eq!(t.scalar(l0).unwrap(), 2.0);
        assert_eq!(t.scalar(l1).unwrap(), 5.0);
    }

    #[test]
    fn decoupling_identical_states_counts_nodes() {
        let mut t = Tape::<f64>::new();
        let h = t.constant(Matrix::from_rows(&[[1.0, 2.0], [-1.0, 0.5], [3.0, 3.0]]));
        let state = LayerState {
            hidden: h,
            memory: Some(h),
            gates: None,
        };
        let l = decoupling_loss(&mut t, &[state, state], false).unwrap();
        assert!((t.scalar(l).unwrap() - 3.0).abs() < 1e-12);
        let l = decoupling_loss(&mut t, &[state, state], true).unwrap();
        assert!((t.scalar(l).unwrap() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn decoupling_orthogonal_is_zero() {
        let mut t = Tape::<f64>::new();
        let h = t.constant(Matrix::from_rows(&[[1.0, 0.0], [1.0, 1.0]]));
        let c = t.constant(Matrix::from_rows(&[[0.0, 4.0], [-2.0, 2.0]]));
        let s0 = LayerState::plain(h);
        let s1 = LayerState {
            hidden: h,
            memory: Some(c),
            gates: None,
        };
        let l = decoupling_loss(&mut t, &[s0, s1], false).unwrap();
        assert_eq!(t.scalar(l).unwrap(), 0.0);
    }
}
