//! Image losses with gradients, and PSNR.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hvs::{hvsq, hvsq_gradient, FeatureBank, PoolingMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    L1,
    Mse,
    /// `0.8 * L1 + 0.2 * (1 - SSIM)`.
    L1Ssim,
    Hvsq,
}

/// A loss ready to evaluate against a target image.
#[derive(Debug, Clone)]
pub enum QualityLoss {
    L1,
    Mse,
    L1Ssim,
    Hvsq {
        map: PoolingMap,
        bank: FeatureBank,
        region: Option<Vec<bool>>,
    },
}

impl QualityLoss {
    pub fn kind(&self) -> LossKind {
        match self {
            QualityLoss::L1 => LossKind::L1,
            QualityLoss::Mse => LossKind::Mse,
            QualityLoss::L1Ssim => LossKind::L1Ssim,
            QualityLoss::Hvsq { .. } => LossKind::Hvsq,
        }
    }

    /// Loss value alone.
    pub fn value(&self, image: &[[f64; 3]], target: &[[f64; 3]], width: u32, height: u32) -> Result<f64> {
        match self {
            QualityLoss::Hvsq { map, bank, region } => {
                check_len(image, target, width, height)?;
                hvsq(target, image, map, *bank, region.as_deref())
            }
            _ => self.evaluate(image, target, width, height).map(|(v, _)| v),
        }
    }

    /// Loss and its gradient with respect to `image`.
    pub fn evaluate(
        &self,
        image: &[[f64; 3]],
        target: &[[f64; 3]],
        width: u32,
        height: u32,
    ) -> Result<(f64, Vec<[f64; 3]>)> {
        check_len(image, target, width, height)?;
        Ok(match self {
            QualityLoss::L1 => l1(image, target),
            QualityLoss::Mse => mse(image, target),
            QualityLoss::L1Ssim => {
                let (a, ga) = l1(image, target);
                let (s, gs) = ssim(image, target, width as usize, height as usize);
                let g = ga
                    .iter()
                    .zip(&gs)
                    .map(|(x, y)| std::array::from_fn(|c| 0.8 * x[c] - 0.2 * y[c]))
                    .collect();
                (0.8 * a + 0.2 * (1.0 - s), g)
            }
            QualityLoss::Hvsq { map, bank, region } => {
                hvsq_gradient(target, image, map, *bank, region.as_deref())?
            }
        })
    }
}

fn check_len(image: &[[f64; 3]], target: &[[f64; 3]], width: u32, height: u32) -> Result<()> {
    let n = width as usize * height as usize;
    if image.len() != n || target.len() != n {
        return Err(Error::DimensionMismatch {
            expected: (width as usize, height as usize),
            actual: (image.len(), target.len()),
        });
    }
    Ok(())
}

pub fn l1(image: &[[f64; 3]], target: &[[f64; 3]]) -> (f64, Vec<[f64; 3]>) {
    let n = (3 * image.len()).max(1) as f64;
    let mut total = 0.0;
    let grad = image
        .iter()
        .zip(target)
        .map(|(a, b)| {
            std::array::from_fn(|c| {
                let d = a[c] - b[c];
                total += d.abs();
                if d > 0.0 {
                    1.0 / n
                } else if d < 0.0 {
                    -1.0 / n
                } else {
                    0.0
                }
            })
        })
        .collect();
    (total / n, grad)
}

pub fn mse(image: &[[f64; 3]], target: &[[f64; 3]]) -> (f64, Vec<[f64; 3]>) {
    let n = (3 * image.len()).max(1) as f64;
    let mut total = 0.0;
    let grad = image
        .iter()
        .zip(target)
        .map(|(a, b)| {
            std::array::from_fn(|c| {
                let d = a[c] - b[c];
                total += d * d;
                2.0 * d / n
            })
        })
        .collect();
    (total / n, grad)
}

/// Peak signal-to-noise ratio in dB for images in `[0, 1]`.
pub fn psnr(image: &[[f64; 3]], target: &[[f64; 3]]) -> f64 {
    let (m, _) = mse(image, target);
    if m <= 0.0 {
        f64::INFINITY
    } else {
        -10.0 * m.log10()
    }
}

pub const SSIM_RADIUS: usize = 3;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Box sums over the `(2r + 1)^2` window around each pixel, clipped to the image.
fn box_sum(v: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let mut sat = vec![0.0; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += v[y * w + x];
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            out[y * w + x] = sat[y1 * (w + 1) + x1] - sat[y0 * (w + 1) + x1]
                - sat[y1 * (w + 1) + x0]
                + sat[y0 * (w + 1) + x0];
        }
    }
    out
}

/// Mean SSIM over pixels and channels using uniform windows, with its
/// gradient with respect to `image`.
pub fn ssim(image: &[[f64; 3]], target: &[[f64; 3]], w: usize, h: usize) -> (f64, Vec<[f64; 3]>) {
    let n_px = w * h;
    let ones = vec![1.0; n_px];
    let counts = box_sum(&ones, w, h, SSIM_RADIUS);
    let mut total = 0.0;
    let mut grad = vec![[0.0; 3]; n_px];
    let norm = (3 * n_px).max(1) as f64;
    for c in 0..3 {
        let x: Vec<f64> = image.iter().map(|p| p[c]).collect();
        let y: Vec<f64> = target.iter().map(|p| p[c]).collect();
        let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
        let sx = box_sum(&x, w, h, SSIM_RADIUS);
        let sy = box_sum(&y, w, h, SSIM_RADIUS);
        let sxx = box_sum(&prod(&x, &x), w, h, SSIM_RADIUS);
        let syy = box_sum(&prod(&y, &y), w, h, SSIM_RADIUS);
        let sxy = box_sum(&prod(&x, &y), w, h, SSIM_RADIUS);
        let mut alpha = vec![0.0; n_px];
        let mut beta = vec![0.0; n_px];
        let mut gamma = vec![0.0; n_px];
        for i in 0..n_px {
            let n = counts[i];
            let (mx, my) = (sx[i] / n, sy[i] / n);
            let vx = sxx[i] / n - mx * mx;
            let vy = syy[i] / n - my * my;
            let cxy = sxy[i] / n - mx * my;
            let a1 = 2.0 * mx * my + C1;
            let a2 = 2.0 * cxy + C2;
            let b1 = mx * mx + my * my + C1;
            let b2 = vx + vy + C2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            let d_mx = 2.0 * my * a2 / (b1 * b2) - s * 2.0 * mx / b1;
            let d_vx = -s / b2;
            let d_cxy = 2.0 * a1 / (b1 * b2);
            // dS/dx_j = (alpha + beta * x_j + gamma * y_j) / n for j in the window.
            alpha[i] = (d_mx - 2.0 * d_vx * mx - d_cxy * my) / n / norm;
            beta[i] = 2.0 * d_vx / n / norm;
            gamma[i] = d_cxy / n / norm;
        }
        // Window membership is symmetric, so the scatter is another box sum.
        let ga = box_sum(&alpha, w, h, SSIM_RADIUS);
        let gb = box_sum(&beta, w, h, SSIM_RADIUS);
        let gg = box_sum(&gamma, w, h, SSIM_RADIUS);
        for j in 0..n_px {
            grad[j][c] = ga[j] + gb[j] * x[j] + gg[j] * y[j];
        }
    }
    (total / norm, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(seed: f64, n: usize) -> Vec<[f64; 3]> {
        (0..n)
            .map(|i| {
                let t = i as f64 + seed;
                [
                    0.5 + 0.4 * (t * 0.7).sin(),
                    0.5 + 0.3 * (t * 1.3).cos(),
                    (t * 0.37).fract(),
                ]
            })
            .collect()
    }

    #[test]
    fn ssim_of_identical_images_is_one() {
        let a = pattern(0.0, 48);
        let (s, g) = ssim(&a, &a, 8, 6);
        assert!((s - 1.0).abs() < 1e-12);
        assert!(g.iter().flatten().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn composite_gradient_matches_finite_differences() {
        let (w, h) = (9, 7);
        let a = pattern(0.0, w * h);
        let b = pattern(3.3, w * h);
        let loss = QualityLoss::L1Ssim;
        let (_, g) = loss.evaluate(&a, &b, w as u32, h as u32).unwrap();
        let eps = 1e-6;
        for j in [0, 10, 31, 62] {
            for c in 0..3 {
                let mut p = a.clone();
                p[j][c] += eps;
                let mut m = a.clone();
                m[j][c] -= eps;
                let num = (loss.evaluate(&p, &b, w as u32, h as u32).unwrap().0
                    - loss.evaluate(&m, &b, w as u32, h as u32).unwrap().0)
                    / (2.0 * eps);
                assert!((num - g[j][c]).abs() < 1e-6, "{j} {c}: {num} vs {}", g[j][c]);
            }
        }
    }

    #[test]
    fn psnr_of_uniform_error() {
        let a = vec![[0.5; 3]; 10];
        let b = vec![[0.6; 3]; 10];
        assert!((psnr(&a, &b) - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&a, &a), f64::INFINITY);
    }
}
