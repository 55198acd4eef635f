use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Softmax cross-entropy over a logit vector with an integer class label.
/// Returns the loss and its gradient `softmax(logits) - onehot(label)`.
/// Stabilized by max subtraction.
pub fn softmax_cross_entropy(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    let n = logits.len();
    if label >= n {
        return Err(Error::Config(format!("label {label} out of range for {n} logits")));
    }
    logits.check_finite("logits")?;
    let max = logits.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut dlogits = logits.clone();
    let mut sum = 0.0;
    for v in dlogits.data_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let log_sum = sum.ln();
    let loss = log_sum + max - logits.data()[label];
    for v in dlogits.data_mut() {
        *v /= sum;
    }
    dlogits.data_mut()[label] -= 1.0;
    Ok((loss, dlogits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn symmetric_logits_cost_ln2() {
        let logits = Tensor::from_vec(&[2], vec![0.0, 0.0]).unwrap();
        for label in 0..2 {
            let (loss, grad) = softmax_cross_entropy(&logits, label).unwrap();
            assert_abs_diff_eq!(loss, std::f64::consts::LN_2, epsilon = 1e-15);
            let want = if label == 0 { [-0.5, 0.5] } else { [0.5, -0.5] };
            assert_abs_diff_eq!(grad.data()[0], want[0], epsilon = 1e-15);
            assert_abs_diff_eq!(grad.data()[1], want[1], epsilon = 1e-15);
        }
    }

    #[test]
    fn confident_correct_logits_vanishing_loss() {
        let logits = Tensor::from_vec(&[2], vec![20.0, -20.0]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, 0).unwrap();
        assert!(loss < 1e-8, "loss {loss}");
    }

    #[test]
    fn rejects_bad_label_and_nan() {
        let logits = Tensor::from_vec(&[2], vec![0.0, 1.0]).unwrap();
        assert!(softmax_cross_entropy(&logits, 2).is_err());
        let bad = Tensor::from_vec(&[2], vec![f64::NAN, 0.0]).unwrap();
        assert!(softmax_cross_entropy(&bad, 0).is_err());
    }
}
