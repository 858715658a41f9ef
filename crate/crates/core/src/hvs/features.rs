//! Differentiable feature banks the metric pools over.

use serde::{Deserialize, Serialize};

/// Softening of gradient magnitudes, `sqrt(g^2 + eps^2)`, keeps them smooth at zero.
pub const GRADIENT_EPS: f64 = 0.01;

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureBank {
    /// Luminance and horizontal/vertical gradient magnitudes at full and
    /// half resolution: six channels.
    #[default]
    Standard,
    /// Luminance only.
    Luminance,
}

impl FeatureBank {
    pub fn channel_count(self) -> usize {
        match self {
            FeatureBank::Standard => 6,
            FeatureBank::Luminance => 1,
        }
    }
}

pub(crate) fn luminance(image: &[[f64; 3]]) -> Vec<f64> {
    image
        .iter()
        .map(|p| LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2])
        .collect()
}

fn soft_abs(g: f64) -> f64 {
    (g * g + GRADIENT_EPS * GRADIENT_EPS).sqrt()
}

fn soft_abs_deriv(g: f64) -> f64 {
    g / soft_abs(g)
}

/// Forward-difference gradient magnitudes, zero difference on the last column/row.
fn gradient_channels(l: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![soft_abs(0.0); w * h];
    let mut gy = vec![soft_abs(0.0); w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                gx[i] = soft_abs(l[i + 1] - l[i]);
            }
            if y + 1 < h {
                gy[i] = soft_abs(l[i + w] - l[i]);
            }
        }
    }
    (gx, gy)
}

fn gradient_channels_backward(l: &[f64], w: usize, h: usize, dgx: &[f64], dgy: &[f64], dl: &mut [f64]) {
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                let d = dgx[i] * soft_abs_deriv(l[i + 1] - l[i]);
                dl[i + 1] += d;
                dl[i] -= d;
            }
            if y + 1 < h {
                let d = dgy[i] * soft_abs_deriv(l[i + w] - l[i]);
                dl[i + w] += d;
                dl[i] -= d;
            }
        }
    }
}

struct Half {
    w: usize,
    h: usize,
    values: Vec<f64>,
    counts: Vec<f64>,
}

/// 2x2 box average; edge blocks average the pixels they contain.
fn downsample(l: &[f64], w: usize, h: usize) -> Half {
    let (w2, h2) = (w.div_ceil(2), h.div_ceil(2));
    let mut values = vec![0.0; w2 * h2];
    let mut counts = vec![0.0; w2 * h2];
    for y in 0..h {
        for x in 0..w {
            let j = (y / 2) * w2 + x / 2;
            values[j] += l[y * w + x];
            counts[j] += 1.0;
        }
    }
    for (v, c) in values.iter_mut().zip(&counts) {
        *v /= c;
    }
    Half {
        w: w2,
        h: h2,
        values,
        counts,
    }
}

/// Feature planes, one `Vec` per channel, each `w * h` long.
pub(crate) fn extract(bank: FeatureBank, image: &[[f64; 3]], w: usize, h: usize) -> Vec<Vec<f64>> {
    let l = luminance(image);
    match bank {
        FeatureBank::Luminance => vec![l],
        FeatureBank::Standard => {
            let (gx, gy) = gradient_channels(&l, w, h);
            let half = downsample(&l, w, h);
            let (hx, hy) = gradient_channels(&half.values, half.w, half.h);
            let up = |c: &[f64]| -> Vec<f64> {
                (0..w * h).map(|i| c[(i / w / 2) * half.w + (i % w) / 2]).collect()
            };
            let (c3, c4, c5) = (up(&half.values), up(&hx), up(&hy));
            vec![l, gx, gy, c3, c4, c5]
        }
    }
}

/// Pulls per-channel feature gradients back to RGB.
pub(crate) fn backward(
    bank: FeatureBank,
    image: &[[f64; 3]],
    w: usize,
    h: usize,
    d: &[Vec<f64>],
) -> Vec<[f64; 3]> {
    let mut dl = d[0].clone();
    if bank == FeatureBank::Standard {
        let l = luminance(image);
        gradient_channels_backward(&l, w, h, &d[1], &d[2], &mut dl);
        let half = downsample(&l, w, h);
        let n2 = half.w * half.h;
        let down = |c: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; n2];
            for i in 0..w * h {
                out[(i / w / 2) * half.w + (i % w) / 2] += c[i];
            }
            out
        };
        let mut dhalf = down(&d[3]);
        let (dhx, dhy) = (down(&d[4]), down(&d[5]));
        gradient_channels_backward(&half.values, half.w, half.h, &dhx, &dhy, &mut dhalf);
        for i in 0..w * h {
            let j = (i / w / 2) * half.w + (i % w) / 2;
            dl[i] += dhalf[j] / half.counts[j];
        }
    }
    dl.iter().map(|g| LUMA.map(|k| k * g)).collect()
}
