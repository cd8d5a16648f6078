//! Central finite-difference gradient check.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::ForwardCtx;
use super::loss::mse_loss;
use super::network::Network;
use super::tensor::Tensor;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub h: f64,
    /// Entries checked per parameter tensor; `None` checks all of them.
    pub max_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { h: 1e-5, max_per_tensor: Some(16), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Entries whose ±h perturbation flipped a ReLU mask or pool argmax.
    pub skipped_kinks: usize,
    /// `(tensor index, flat index)` of the worst entry.
    pub worst: Option<(usize, usize)>,
}

fn loss_and_kinks(net: &mut Network, inputs: &[Tensor], target: &[f64]) -> Result<(f64, u64)> {
    let pred = net.forward(inputs, &mut ForwardCtx::deterministic())?;
    let (loss, _) = mse_loss(&pred, target)?;
    Ok((loss, net.kink_signature()))
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares backprop gradients of the MSE loss against central
/// differences. Runs batch norm in training mode with dropout off, on a
/// private copy of `net`.
pub fn gradient_check(net: &Network, inputs: &[Tensor], target: &[f64], cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut net = net.clone();
    net.zero_grad();
    let pred = net.forward(inputs, &mut ForwardCtx::deterministic())?;
    let base_kinks = net.kink_signature();
    let (_, grad) = mse_loss(&pred, target)?;
    net.backward(grad)?;
    let analytic: Vec<Vec<f64>> = net
        .params()
        .iter()
        .map(|t| t.grad.clone().unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport { max_rel_error: 0.0, checked: 0, skipped_kinks: 0, worst: None };
    for (ti, grads) in analytic.iter().enumerate() {
        let indices: Vec<usize> = match cfg.max_per_tensor {
            Some(k) if k < grads.len() => sample(&mut rng, grads.len(), k).into_vec(),
            _ => (0..grads.len()).collect(),
        };
        for idx in indices {
            let orig = net.params()[ti].data[idx];
            net.params_mut()[ti].data[idx] = orig + cfg.h;
            let (plus, k_plus) = loss_and_kinks(&mut net, inputs, target)?;
            net.params_mut()[ti].data[idx] = orig - cfg.h;
            let (minus, k_minus) = loss_and_kinks(&mut net, inputs, target)?;
            net.params_mut()[ti].data[idx] = orig;
            if k_plus != base_kinks || k_minus != base_kinks {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * cfg.h);
            let err = relative_error(grads[idx], numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((ti, idx));
            }
        }
    }
    Ok(report)
}
