use crate::eval::{ssim, ssim_with_grad, EvalError};
use crate::image::Image;

/// Photometric loss terms for one view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    /// `(1 − λ)·l1 + λ·dssim`.
    pub total: f64,
    pub l1: f64,
    /// `(1 − SSIM) / 2`.
    pub dssim: f64,
}

fn l1(a: &Image, b: &Image) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / a.data.len() as f64
}

pub fn photometric_loss(rendered: &Image, gt: &Image, lambda: f64) -> Result<LossTerms, EvalError> {
    rendered.ensure_same_shape(gt)?;
    let l1 = l1(rendered, gt);
    let dssim = 0.5 * (1.0 - ssim(rendered, gt)?);
    Ok(LossTerms {
        total: (1.0 - lambda) * l1 + lambda * dssim,
        l1,
        dssim,
    })
}

/// Loss terms and the gradient of `total` w.r.t. `rendered`.
pub fn photometric_loss_with_grad(
    rendered: &Image,
    gt: &Image,
    lambda: f64,
) -> Result<(LossTerms, Image), EvalError> {
    rendered.ensure_same_shape(gt)?;
    let n = rendered.data.len() as f64;
    let l1 = l1(rendered, gt);
    let mut grad = rendered.clone();
    for (g, (x, y)) in grad.data.iter_mut().zip(rendered.data.iter().zip(&gt.data)) {
        let d = x - y;
        let sign = if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        };
        *g = (1.0 - lambda) * sign / n;
    }
    let (s, gs) = ssim_with_grad(rendered, gt)?;
    for (g, d) in grad.data.iter_mut().zip(&gs.data) {
        *g -= 0.5 * lambda * d;
    }
    let dssim = 0.5 * (1.0 - s);
    Ok((
        LossTerms {
            total: (1.0 - lambda) * l1 + lambda * dssim,
            l1,
            dssim,
        },
        grad,
    ))
}
