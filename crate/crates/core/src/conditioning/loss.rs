//! Composite training loss: target-token MSE plus a weighted L1 source
//! reconstruction term.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-term loss values; `total = mse + alpha * reference`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub mse: f64,
    pub reference: f64,
    pub alpha: f64,
    pub total: f64,
}

/// Mean-squared error on target tokens plus `alpha` times the mean absolute
/// error of the source pathway against the clean source latent.
pub fn total_loss(
    pred_target: &Tensor,
    noise_target: &Tensor,
    out_source: &Tensor,
    z_s_clean: &Tensor,
    alpha: f64,
) -> Result<LossBreakdown> {
    if pred_target.shape() != noise_target.shape() {
        return Err(Error::Size(format!(
            "target shapes disagree: {:?} vs {:?}",
            pred_target.shape(),
            noise_target.shape()
        )));
    }
    if out_source.shape() != z_s_clean.shape() {
        return Err(Error::Size(format!(
            "source shapes disagree: {:?} vs {:?}",
            out_source.shape(),
            z_s_clean.shape()
        )));
    }
    let (mse, _) = mse_f64(
        &to_f64(pred_target.data()),
        &to_f64(noise_target.data()),
        false,
    );
    let (reference, _) = l1_f64(&to_f64(out_source.data()), &to_f64(z_s_clean.data()), false);
    Ok(LossBreakdown {
        mse,
        reference,
        alpha,
        total: mse + alpha * reference,
    })
}

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Mean squared error and (optionally) its gradient w.r.t. `pred`.
pub(crate) fn mse_f64(pred: &[f64], target: &[f64], with_grad: bool) -> (f64, Vec<f64>) {
    let n = pred.len().max(1) as f64;
    let mut acc = 0.0;
    let mut grad = if with_grad { vec![0.0; pred.len()] } else { Vec::new() };
    for (i, (p, t)) in pred.iter().zip(target).enumerate() {
        let d = p - t;
        acc += d * d;
        if with_grad {
            grad[i] = 2.0 * d / n;
        }
    }
    (acc / n, grad)
}

/// Mean absolute error and (optionally) its gradient w.r.t. `pred`.
pub(crate) fn l1_f64(pred: &[f64], target: &[f64], with_grad: bool) -> (f64, Vec<f64>) {
    let n = pred.len().max(1) as f64;
    let mut acc = 0.0;
    let mut grad = if with_grad { vec![0.0; pred.len()] } else { Vec::new() };
    for (i, (p, t)) in pred.iter().zip(target).enumerate() {
        let d = p - t;
        acc += d.abs();
        if with_grad {
            grad[i] = d.signum() / n;
        }
    }
    (acc / n, grad)
}
