use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Mean squared error over all elements and its gradient w.r.t. `pred`.
pub fn mse_loss(pred: &Tensor, target: &[f64]) -> Result<(f64, Tensor)> {
    if pred.len() != target.len() || target.is_empty() {
        return Err(Error::Dimension(format!(
            "mse: {} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    let n = target.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(target.len());
    for (p, y) in pred.data.iter().zip(target) {
        let d = p - y;
        loss += d * d;
        grad.push(2.0 * d / n);
    }
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss is {loss}")));
    }
    Ok((loss, Tensor { shape: pred.shape.clone(), data: grad, grad: None }))
}
