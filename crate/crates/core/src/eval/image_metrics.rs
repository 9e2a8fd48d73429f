use super::EvalError;
use crate::image::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

/// Peak signal-to-noise ratio in dB. Identical images give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64, EvalError> {
    a.ensure_same_shape(b)?;
    if !(peak > 0.0) {
        return Err(EvalError::Parameter(format!("peak must be positive, got {peak}")));
    }
    let sse: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum();
    if sse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse / a.data.len() as f64;
    Ok(10.0 * (peak * peak / mse).log10())
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - r;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Valid-mode separable correlation of one plane with the window.
fn filter_valid(p: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let line = &p[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&line[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut s = 0.0;
            for (j, kj) in k.iter().enumerate() {
                s += kj * rows[(y + j) * ow + x];
            }
            out[y * ow + x] = s;
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters a window map back onto the plane.
fn filter_adjoint(m: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut cols = vec![0.0; ow * h];
    for y in 0..oh {
        for (j, kj) in k.iter().enumerate() {
            for x in 0..ow {
                cols[(y + j) * ow + x] += kj * m[y * ow + x];
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            let v = cols[y * ow + x];
            for (i, ki) in k.iter().enumerate() {
                out[y * w + x + i] += ki * v;
            }
        }
    }
    out
}

struct Moments {
    mu_a: Vec<f64>,
    mu_b: Vec<f64>,
    var_a: Vec<f64>,
    var_b: Vec<f64>,
    cov: Vec<f64>,
}

fn moments(a: &[f64], b: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Moments {
    let sq = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| x * y).collect() };
    let mu_a = filter_valid(a, w, h, k);
    let mu_b = filter_valid(b, w, h, k);
    let mut var_a = filter_valid(&sq(a, a), w, h, k);
    let mut var_b = filter_valid(&sq(b, b), w, h, k);
    let mut cov = filter_valid(&sq(a, b), w, h, k);
    for i in 0..mu_a.len() {
        var_a[i] -= mu_a[i] * mu_a[i];
        var_b[i] -= mu_b[i] * mu_b[i];
        cov[i] -= mu_a[i] * mu_b[i];
    }
    Moments {
        mu_a,
        mu_b,
        var_a,
        var_b,
        cov,
    }
}

fn check(a: &Image, b: &Image) -> Result<(), EvalError> {
    a.ensure_same_shape(b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(EvalError::TooSmall {
            width: a.width,
            height: a.height,
            window: SSIM_WINDOW,
        });
    }
    Ok(())
}

/// Mean SSIM over all fully-covered window positions and channels, for
/// images with values in [0, 1].
pub fn ssim(a: &Image, b: &Image) -> Result<f64, EvalError> {
    ssim_impl(a, b, false).map(|(s, _)| s)
}

/// SSIM together with its gradient w.r.t. `a`.
pub fn ssim_with_grad(a: &Image, b: &Image) -> Result<(f64, Image), EvalError> {
    ssim_impl(a, b, true).map(|(s, g)| (s, g.unwrap()))
}

fn ssim_impl(a: &Image, b: &Image, want_grad: bool) -> Result<(f64, Option<Image>), EvalError> {
    check(a, b)?;
    let c1 = 0.01f64.powi(2);
    let c2 = 0.03f64.powi(2);
    let k = gaussian_kernel();
    let (w, h, ch) = a.shape();
    let windows = (w + 1 - SSIM_WINDOW) * (h + 1 - SSIM_WINDOW);
    let norm = 1.0 / (windows * ch) as f64;
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Image::new(w, h, ch));
    for c in 0..ch {
        let (pa, pb) = (a.plane(c), b.plane(c));
        let m = moments(&pa, &pb, w, h, &k);
        let mut d_mu = vec![0.0; windows];
        let mut d_var = vec![0.0; windows];
        let mut d_cov = vec![0.0; windows];
        for i in 0..windows {
            let n1 = 2.0 * m.mu_a[i] * m.mu_b[i] + c1;
            let n2 = 2.0 * m.cov[i] + c2;
            let d1 = m.mu_a[i] * m.mu_a[i] + m.mu_b[i] * m.mu_b[i] + c1;
            let d2 = m.var_a[i] + m.var_b[i] + c2;
            let s = n1 * n2 / (d1 * d2);
            total += s;
            if want_grad {
                let s_mu = 2.0 * m.mu_b[i] * n2 / (d1 * d2) - s * 2.0 * m.mu_a[i] / d1;
                let s_var = -s / d2;
                let s_cov = 2.0 * n1 / (d1 * d2);
                d_mu[i] = s_mu - 2.0 * s_var * m.mu_a[i] - s_cov * m.mu_b[i];
                d_var[i] = 2.0 * s_var;
                d_cov[i] = s_cov;
            }
        }
        if let Some(g) = grad.as_mut() {
            let g_mu = filter_adjoint(&d_mu, w, h, &k);
            let g_var = filter_adjoint(&d_var, w, h, &k);
            let g_cov = filter_adjoint(&d_cov, w, h, &k);
            for p in 0..w * h {
                let idx = p * ch + c;
                g.data[idx] = norm * (g_mu[p] + pa[p] * g_var[p] + pb[p] * g_cov[p]);
            }
        }
    }
    Ok((total * norm, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> Image {
        Image::from_vec(w, h, c, (0..w * h * c).map(|_| rng.random()).collect()).unwrap()
    }

    /// Direct 2D sliding window, no separability.
    fn naive_ssim(a: &Image, b: &Image) -> f64 {
        let k = gaussian_kernel();
        let (c1, c2) = (1e-4, 9e-4);
        let (w, h, ch) = a.shape();
        let mut total = 0.0;
        let mut count = 0;
        for c in 0..ch {
            for y0 in 0..=h - SSIM_WINDOW {
                for x0 in 0..=w - SSIM_WINDOW {
                    let (mut ma, mut mb) = (0.0, 0.0);
                    for j in 0..SSIM_WINDOW {
                        for i in 0..SSIM_WINDOW {
                            let wt = k[i] * k[j];
                            ma += wt * a.get(x0 + i, y0 + j, c);
                            mb += wt * b.get(x0 + i, y0 + j, c);
                        }
                    }
                    let (mut va, mut vb, mut cv) = (0.0, 0.0, 0.0);
                    for j in 0..SSIM_WINDOW {
                        for i in 0..SSIM_WINDOW {
                            let wt = k[i] * k[j];
                            let da = a.get(x0 + i, y0 + j, c) - ma;
                            let db = b.get(x0 + i, y0 + j, c) - mb;
                            va += wt * da * da;
                            vb += wt * db * db;
                            cv += wt * da * db;
                        }
                    }
                    total +=
                        (2.0 * ma * mb + c1) * (2.0 * cv + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                    count += 1;
                }
            }
        }
        total / count as f64
    }

    #[test]
    fn psnr_closed_forms() {
        let a = Image::filled(8, 8, &[0.5, 0.5, 0.5]);
        let b = Image::filled(8, 8, &[0.6, 0.6, 0.6]);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-10);
        assert!(psnr(&a, &Image::new(4, 4, 3), 1.0).is_err());
    }

    #[test]
    fn psnr_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (w, h) = (rng.random_range(1..20), rng.random_range(1..20));
            let a = random_image(&mut rng, w, h, 3);
            let b = random_image(&mut rng, w, h, 3);
            let mut sse = 0.0;
            for y in 0..h {
                for x in 0..w {
                    for c in 0..3 {
                        sse += (a.get(x, y, c) - b.get(x, y, c)).powi(2);
                    }
                }
            }
            let want = 10.0 * (1.0 / (sse / (w * h * 3) as f64)).log10();
            assert!((psnr(&a, &b, 1.0).unwrap() - want).abs() < 1e-10);
        }
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..SSIM_WINDOW {
            assert_eq!(k[i], k[SSIM_WINDOW - 1 - i]);
        }
    }

    #[test]
    fn ssim_constant_closed_form() {
        let a = Image::filled(16, 12, &[0.5, 0.2, 0.9]);
        let b = Image::filled(16, 12, &[0.6, 0.3, 0.1]);
        let (c1, c2) = (1e-4, 9e-4);
        let want = [(0.5, 0.6), (0.2, 0.3), (0.9, 0.1)]
            .iter()
            .map(|(x, y)| (2.0 * x * y + c1) * c2 / ((x * x + y * y + c1) * c2))
            .sum::<f64>()
            / 3.0;
        assert!((ssim(&a, &b).unwrap() - want).abs() < 1e-12);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = Image::new(10, 20, 1);
        assert!(matches!(ssim(&a, &a), Err(EvalError::TooSmall { .. })));
    }

    #[test]
    fn ssim_matches_naive_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (w, h) = (rng.random_range(11..20), rng.random_range(11..20));
            let ch = if rng.random() { 1 } else { 3 };
            let a = random_image(&mut rng, w, h, ch);
            let b = random_image(&mut rng, w, h, ch);
            assert!((ssim(&a, &b).unwrap() - naive_ssim(&a, &b)).abs() < 1e-8);
        }
    }

    #[test]
    fn ssim_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_image(&mut rng, 14, 13, 3);
        let b = random_image(&mut rng, 14, 13, 3);
        let (_, g) = ssim_with_grad(&a, &b).unwrap();
        let h = 1e-6;
        for idx in (0..a.data.len()).step_by(7) {
            let mut ap = a.clone();
            ap.data[idx] += h;
            let mut am = a.clone();
            am.data[idx] -= h;
            let fd = (ssim(&ap, &b).unwrap() - ssim(&am, &b).unwrap()) / (2.0 * h);
            assert!(
                (fd - g.data[idx]).abs() < 1e-7 * (1.0 + fd.abs()),
                "{idx}: {fd} vs {}",
                g.data[idx]
            );
        }
    }

    proptest! {
        #[test]
        fn ssim_is_symmetric_and_bounded(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_image(&mut rng, 12, 12, 3);
            let b = random_image(&mut rng, 12, 12, 3);
            let ab = ssim(&a, &b).unwrap();
            prop_assert!((ab - ssim(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
            prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn psnr_symmetric_and_monotone_in_noise(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_image(&mut rng, 8, 8, 3);
            let noise: Vec<f64> = (0..a.data.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut last = f64::INFINITY;
            for amp in [0.01, 0.02, 0.05, 0.1, 0.2] {
                let b = Image::from_vec(8, 8, 3, a.data.iter().zip(&noise).map(|(x, n)| x + amp * n).collect()).unwrap();
                let p = psnr(&a, &b, 1.0).unwrap();
                prop_assert_eq!(p, psnr(&b, &a, 1.0).unwrap());
                prop_assert!(p < last);
                last = p;
            }
        }
    }
}
