//! Elementwise functions, softmax and losses.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::Real;
use crate::error::{Error, Result};

pub fn sigmoid(x: Real) -> Real {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax.
pub fn softmax(scores: ArrayView1<Real>) -> Array1<Real> {
    let max = scores.iter().copied().fold(Real::NEG_INFINITY, Real::max);
    let mut out = scores.mapv(|s| (s - max).exp());
    let sum = out.sum();
    out /= sum;
    out
}

pub fn log_softmax(scores: ArrayView1<Real>) -> Array1<Real> {
    let max = scores.iter().copied().fold(Real::NEG_INFINITY, Real::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<Real>().ln();
    scores.mapv(|s| s - lse)
}

/// Backward of `p = softmax(s)`: returns `ds` from `dp`.
pub fn softmax_backward(probs: ArrayView1<Real>, dprobs: ArrayView1<Real>) -> Array1<Real> {
    let inner = probs.dot(&dprobs);
    let mut ds = dprobs.to_owned();
    ds -= inner;
    ds *= &probs;
    ds
}

/// Mean negative log-likelihood over positions whose target is not `pad`.
/// Returns the loss and its gradient with respect to `logits`.
pub fn nll_loss(
    logits: ArrayView2<Real>,
    targets: &[usize],
    pad: usize,
) -> Result<(Real, Array2<Real>)> {
    if logits.nrows() != targets.len() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} targets",
            logits.nrows(),
            targets.len()
        )));
    }
    let count = targets.iter().filter(|&&t| t != pad).count();
    if count == 0 {
        return Err(Error::Validation("every target position is padding".into()));
    }
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (t, (row, &target)) in logits.axis_iter(Axis(0)).zip(targets).enumerate() {
        if target == pad {
            continue;
        }
        if target >= row.len() {
            return Err(Error::Shape(format!(
                "target {target} outside {} classes",
                row.len()
            )));
        }
        let logp = log_softmax(row);
        loss -= logp[target];
        let mut g = grad.row_mut(t);
        g.assign(&logp.mapv(Real::exp));
        g[target] -= 1.0;
    }
    let n = count as Real;
    grad /= n;
    Ok((loss / n, grad))
}

/// Smooth-L1 (Huber) with threshold `beta`.
pub fn smooth_l1(x: Real, beta: Real) -> Real {
    if x.abs() < beta {
        0.5 * x * x / beta
    } else {
        x.abs() - 0.5 * beta
    }
}

pub fn smooth_l1_grad(x: Real, beta: Real) -> Real {
    if x.abs() < beta {
        x / beta
    } else {
        x.signum()
    }
}

/// `a ⊗ b` accumulated into `out` with weight `alpha`.
pub fn add_outer(out: &mut Array2<Real>, alpha: Real, a: ArrayView1<Real>, b: ArrayView1<Real>) {
    for (mut row, &ai) in out.axis_iter_mut(Axis(0)).zip(a.iter()) {
        if ai != 0.0 {
            row.scaled_add(alpha * ai, &b);
        }
    }
}

pub fn concat(parts: &[ArrayView1<Real>]) -> Array1<Real> {
    let mut out = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for p in parts {
        out.extend(p.iter().copied());
    }
    Array1::from(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let logits = array![[0.0, 800.0, 0.0], [900.0, 0.0, 0.0]];
        let (loss, _) = nll_loss(logits.view(), &[1, 0], 99).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn uniform_logits_over_560_classes() {
        let logits = Array2::<Real>::zeros((3, 560));
        let (loss, _) = nll_loss(logits.view(), &[4, 100, 559], 0).unwrap();
        assert!((loss - (560.0 as Real).ln()).abs() < 1e-12);
        assert!((loss - 6.3279).abs() < 1e-4);
    }

    #[test]
    fn padding_is_masked() {
        let logits = array![
            [0.3, -1.0, 2.0],
            [0.1, 0.2, 0.3],
            [5.0, 1.0, 1.0],
            [1.0, 1.0, 1.0]
        ];
        let (a, ga) = nll_loss(logits.slice(ndarray::s![..2, ..]), &[2, 1], 0).unwrap();
        let (b, gb) = nll_loss(logits.view(), &[2, 1, 0, 0], 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(ga, gb.slice(ndarray::s![..2, ..]));
        assert!(gb.slice(ndarray::s![2.., ..]).iter().all(|v| *v == 0.0));
        assert!(nll_loss(logits.view(), &[0, 0, 0, 0], 0).is_err());
        assert!(nll_loss(logits.view(), &[1], 0).is_err());
    }

    #[test]
    fn smooth_l1_examples() {
        assert!((smooth_l1(0.2, 1.0) - 0.02).abs() < crate::neural::TEST_TOL);
        assert_eq!(smooth_l1(-3.0, 1.0), 2.5);
        assert_eq!(smooth_l1_grad(-3.0, 1.0), -1.0);
        assert_eq!(smooth_l1_grad(0.25, 1.0), 0.25);
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(v in prop::collection::vec(-50.0f64..50.0, 1..40)) {
            let v = Array1::from(v.into_iter().map(|x| x as Real).collect::<Vec<_>>());
            let p = softmax(v.view());
            prop_assert!((p.sum() - 1.0).abs() <= crate::neural::TEST_TOL);
            prop_assert!(p.iter().all(|x| *x > 0.0 && x.is_finite()));
        }

        #[test]
        fn softmax_survives_huge_scores(v in prop::collection::vec(-1e30f64..1e30, 1..10)) {
            let v = Array1::from(v.into_iter().map(|x| x as Real).collect::<Vec<_>>());
            let p = softmax(v.view());
            prop_assert!(p.iter().all(|x| x.is_finite()));
            prop_assert!((p.sum() - 1.0).abs() <= crate::neural::TEST_TOL);
        }
    }
}
