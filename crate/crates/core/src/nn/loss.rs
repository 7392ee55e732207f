use super::Tensor;
use crate::{Error, Result};

/// Mean softmax cross-entropy over the batch and its gradient `(softmax - onehot) / N`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f32, Tensor)> {
    logits.expect_rank("softmax_cross_entropy", 2)?;
    let (n, k) = (logits.dims()[0], logits.dims()[1]);
    if labels.len() != n {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("{n} rows of logits but {} labels", labels.len()),
        ));
    }
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
        return Err(Error::Input(format!("label {l} at row {i} outside [0, {k})")));
    }
    let mut grad = Tensor::zeros(&[n, k]);
    let mut total = 0.0f32;
    for ((row, g), &label) in logits
        .data()
        .chunks_exact(k)
        .zip(grad.data_mut().chunks_exact_mut(k))
        .zip(labels)
    {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f32;
        for (gi, &z) in g.iter_mut().zip(row) {
            *gi = (z - max).exp();
            sum += *gi;
        }
        total += sum.ln() - (row[label] - max);
        for gi in g.iter_mut() {
            *gi /= sum * n as f32;
        }
        g[label] -= 1.0 / n as f32;
    }
    Ok((total / n as f32, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_k() {
        let (loss, _) = softmax_cross_entropy(&Tensor::zeros(&[3, 10]), &[0, 4, 9]).unwrap();
        assert!((loss - 10f32.ln()).abs() < 1e-6);
    }

    #[test]
    fn confident_correct_logit_gives_zero_loss() {
        let logits = Tensor::new(&[1, 3], vec![0.0, 1e4, 0.0]).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, &[1]).unwrap();
        assert!(loss.abs() < 1e-6);
        assert!(grad.data().iter().all(|g| g.abs() < 1e-6));
    }

    #[test]
    fn two_class_hand_value() {
        let logits = Tensor::new(&[1, 2], vec![1.0, 2.0]).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, &[1]).unwrap();
        assert!((loss - 0.313_262).abs() < 1e-6);
        let p0 = 1.0 / (1.0 + 1f32.exp());
        assert!((grad.data()[0] - p0).abs() < 1e-6);
        assert!((grad.data()[1] + p0).abs() < 1e-6);
    }

    #[test]
    fn out_of_range_label() {
        let r = softmax_cross_entropy(&Tensor::zeros(&[1, 3]), &[3]);
        assert!(matches!(r, Err(Error::Input(_))));
    }
}
