//! Eccentricity-aware perceptual quality metric.
//!
//! Each pixel owns a disk-shaped pooling whose radius grows linearly with
//! its eccentricity. The metric compares the mean and standard deviation of
//! image features inside every pooling between a reference and an altered
//! image, so detail lost in the periphery costs little while the same loss
//! near the gaze is expensive.

mod features;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use features::{FeatureBank, GRADIENT_EPS};

use crate::camera::DisplayGeometry;
use crate::error::{Error, Result};

/// Smallest allowed pooling radius, a single pixel.
pub const MIN_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HvsConfig {
    /// Pooling diameter, in degrees, per degree of eccentricity.
    pub rate: f64,
    pub r_min: f64,
    pub bank: FeatureBank,
}

impl Default for HvsConfig {
    fn default() -> Self {
        HvsConfig {
            rate: 0.25,
            r_min: MIN_RADIUS,
            bank: FeatureBank::Standard,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolingMap {
    pub width: u32,
    pub height: u32,
    /// Pooling radius in pixels, row-major.
    pub radii: Vec<f64>,
    pub display: DisplayGeometry,
}

/// Radius in pixels for eccentricity `ecc` degrees: the pooling diameter
/// `rate * ecc` degrees, halved and converted to pixels.
pub fn pooling_radius(ecc: f64, rate: f64, r_min: f64, pixels_per_degree: f64) -> f64 {
    (rate * ecc * pixels_per_degree / 2.0).max(r_min)
}

pub fn build_pooling_map(display: &DisplayGeometry, rate: f64, r_min: f64) -> Result<PoolingMap> {
    display.validate()?;
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::Config(format!("pooling rate must be >= 0, got {rate}")));
    }
    if !(r_min >= MIN_RADIUS) || !r_min.is_finite() {
        return Err(Error::Config(format!("r_min must be >= {MIN_RADIUS}, got {r_min}")));
    }
    let (w, h) = (display.width, display.height);
    let radii = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| {
            pooling_radius(
                display.pixel_eccentricity(x, y),
                rate,
                r_min,
                display.pixels_per_degree,
            )
        })
        .collect();
    Ok(PoolingMap {
        width: w,
        height: h,
        radii,
        display: *display,
    })
}

impl PoolingMap {
    pub fn from_config(display: &DisplayGeometry, config: &HvsConfig) -> Result<Self> {
        build_pooling_map(display, config.rate, config.r_min)
    }

    pub fn pixel_count(&self) -> usize {
        self.radii.len()
    }

    /// Row segments `(y, x0, x1)` (inclusive) of pixel `i`'s pooling disk.
    fn spans(&self, i: usize, mut f: impl FnMut(usize, usize, usize)) {
        let w = self.width as i64;
        let h = self.height as i64;
        let (cx, cy) = ((i as i64) % w, (i as i64) / w);
        let r = self.radii[i];
        let reach = (r + 1e-9).floor() as i64;
        for dy in -reach..=reach {
            let y = cy + dy;
            if y < 0 || y >= h {
                continue;
            }
            let half = ((r * r - (dy * dy) as f64).max(0.0) + 1e-9).sqrt().floor() as i64;
            let x0 = (cx - half).max(0);
            let x1 = (cx + half).min(w - 1);
            f(y as usize, x0 as usize, x1 as usize);
        }
    }

    /// Pixels that can change the metric over `region`: the union of the
    /// region's poolings, grown by `margin` pixels for feature support.
    pub fn influence(&self, region: &[bool], margin: usize) -> Vec<bool> {
        let (w, h) = (self.width as usize, self.height as usize);
        let mut diff = vec![0i32; (w + 1) * h];
        for i in (0..region.len()).filter(|&i| region[i]) {
            self.spans(i, |y, x0, x1| {
                diff[y * (w + 1) + x0] += 1;
                diff[y * (w + 1) + x1 + 1] -= 1;
            });
        }
        let mut covered = vec![false; w * h];
        for y in 0..h {
            let mut run = 0;
            for x in 0..w {
                run += diff[y * (w + 1) + x];
                covered[y * w + x] = run > 0;
            }
        }
        if margin == 0 {
            return covered;
        }
        let mut out = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                if covered[y * w + x] {
                    for yy in y.saturating_sub(margin)..(y + margin + 1).min(h) {
                        for xx in x.saturating_sub(margin)..(x + margin + 1).min(w) {
                            out[yy * w + xx] = true;
                        }
                    }
                }
            }
        }
        out
    }

    /// Pixel indices in pixel `i`'s pooling.
    pub fn pooling(&self, i: usize) -> Vec<usize> {
        let w = self.width as usize;
        let mut out = Vec::new();
        self.spans(i, |y, x0, x1| out.extend((x0..=x1).map(|x| y * w + x)));
        out
    }
}

/// Row prefix sums of a feature plane and its square, after centring.
struct RowSums {
    w: usize,
    sum: Vec<f64>,
    sq: Vec<f64>,
    shift: f64,
}

impl RowSums {
    fn new(plane: &[f64], w: usize, h: usize) -> Self {
        // Centring first keeps E[x^2] - E[x]^2 accurate.
        let shift = plane.iter().sum::<f64>() / plane.len().max(1) as f64;
        let mut sum = vec![0.0; (w + 1) * h];
        let mut sq = vec![0.0; (w + 1) * h];
        for y in 0..h {
            for x in 0..w {
                let v = plane[y * w + x] - shift;
                sum[y * (w + 1) + x + 1] = sum[y * (w + 1) + x] + v;
                sq[y * (w + 1) + x + 1] = sq[y * (w + 1) + x] + v * v;
            }
        }
        RowSums { w, sum, sq, shift }
    }

    fn add(&self, y: usize, x0: usize, x1: usize, acc: &mut (f64, f64)) {
        let row = y * (self.w + 1);
        acc.0 += self.sum[row + x1 + 1] - self.sum[row + x0];
        acc.1 += self.sq[row + x1 + 1] - self.sq[row + x0];
    }
}

/// Population mean and standard deviation from centred sums.
fn moments(acc: (f64, f64), n: f64, shift: f64) -> (f64, f64) {
    let m = acc.0 / n;
    let var = acc.1 / n - m * m;
    let sd = if var > 1e-24 { var.sqrt() } else { 0.0 };
    (m + shift, sd)
}

#[derive(Clone, Copy, Default)]
struct PoolStats {
    n: f64,
    mean_a: f64,
    sd_a: f64,
    mean_r: f64,
    sd_r: f64,
}

struct Prepared {
    w: usize,
    h: usize,
    feat_a: Vec<Vec<f64>>,
    sums_a: Vec<RowSums>,
    sums_r: Vec<RowSums>,
    members: Vec<usize>,
}

fn prepare(
    reference: &[[f64; 3]],
    altered: &[[f64; 3]],
    map: &PoolingMap,
    bank: FeatureBank,
    region: Option<&[bool]>,
) -> Result<Prepared> {
    let (w, h) = (map.width as usize, map.height as usize);
    for img in [reference, altered] {
        if img.len() != w * h {
            return Err(Error::DimensionMismatch {
                expected: (w, h),
                actual: (img.len(), 1),
            });
        }
    }
    if let Some(r) = region {
        if r.len() != w * h {
            return Err(Error::DimensionMismatch {
                expected: (w, h),
                actual: (r.len(), 1),
            });
        }
    }
    let feat_r = features::extract(bank, reference, w, h);
    let feat_a = features::extract(bank, altered, w, h);
    let sums_r = feat_r.iter().map(|p| RowSums::new(p, w, h)).collect();
    let sums_a = feat_a.iter().map(|p| RowSums::new(p, w, h)).collect();
    let members = match region {
        Some(r) => (0..w * h).filter(|&i| r[i]).collect(),
        None => (0..w * h).collect(),
    };
    Ok(Prepared {
        w,
        h,
        feat_a,
        sums_a,
        sums_r,
        members,
    })
}

fn pool_stats(p: &Prepared, map: &PoolingMap, i: usize) -> Vec<PoolStats> {
    let channels = p.sums_a.len();
    let mut acc_a = vec![(0.0, 0.0); channels];
    let mut acc_r = vec![(0.0, 0.0); channels];
    let mut n = 0usize;
    map.spans(i, |y, x0, x1| {
        n += x1 - x0 + 1;
        for c in 0..channels {
            p.sums_a[c].add(y, x0, x1, &mut acc_a[c]);
            p.sums_r[c].add(y, x0, x1, &mut acc_r[c]);
        }
    });
    let n = n as f64;
    (0..channels)
        .map(|c| {
            let (mean_a, sd_a) = moments(acc_a[c], n, p.sums_a[c].shift);
            let (mean_r, sd_r) = moments(acc_r[c], n, p.sums_r[c].shift);
            PoolStats {
                n,
                mean_a,
                sd_a,
                mean_r,
                sd_r,
            }
        })
        .collect()
}

fn term(s: &PoolStats) -> f64 {
    (s.mean_a - s.mean_r).powi(2) + (s.sd_a - s.sd_r).powi(2)
}

/// The metric over the pixels of `region` (all pixels when `None`).
pub fn hvsq(
    reference: &[[f64; 3]],
    altered: &[[f64; 3]],
    map: &PoolingMap,
    bank: FeatureBank,
    region: Option<&[bool]>,
) -> Result<f64> {
    let p = prepare(reference, altered, map, bank, region)?;
    if p.members.is_empty() {
        return Ok(0.0);
    }
    let terms: Vec<f64> = p
        .members
        .par_iter()
        .map(|&i| pool_stats(&p, map, i).iter().map(term).sum())
        .collect();
    Ok(terms.iter().sum::<f64>() / p.members.len() as f64)
}

/// The metric and its gradient with respect to the altered image.
pub fn hvsq_gradient(
    reference: &[[f64; 3]],
    altered: &[[f64; 3]],
    map: &PoolingMap,
    bank: FeatureBank,
    region: Option<&[bool]>,
) -> Result<(f64, Vec<[f64; 3]>)> {
    let p = prepare(reference, altered, map, bank, region)?;
    let (w, h) = (p.w, p.h);
    if p.members.is_empty() {
        return Ok((0.0, vec![[0.0; 3]; w * h]));
    }
    let n_region = p.members.len() as f64;
    let per_pixel: Vec<Vec<PoolStats>> =
        p.members.par_iter().map(|&i| pool_stats(&p, map, i)).collect();
    let value = per_pixel
        .iter()
        .map(|s| s.iter().map(term).sum::<f64>())
        .sum::<f64>()
        / n_region;

    // d/dF_j of pooling i's term is A_i + F_j * B_i for every member j.
    // Scatter A and B over each pooling with per-row difference arrays.
    let channels = p.feat_a.len();
    let mut d_features = Vec::with_capacity(channels);
    for c in 0..channels {
        let mut diff_a = vec![0.0; (w + 1) * h];
        let mut diff_b = vec![0.0; (w + 1) * h];
        for (&i, stats) in p.members.iter().zip(&per_pixel) {
            let s = &stats[c];
            let (a, b) = if s.sd_a > 0.0 {
                let k = 2.0 * (s.sd_a - s.sd_r) / (s.n * s.sd_a);
                (2.0 * (s.mean_a - s.mean_r) / s.n - k * s.mean_a, k)
            } else {
                (2.0 * (s.mean_a - s.mean_r) / s.n, 0.0)
            };
            if a == 0.0 && b == 0.0 {
                continue;
            }
            map.spans(i, |y, x0, x1| {
                let row = y * (w + 1);
                diff_a[row + x0] += a;
                diff_a[row + x1 + 1] -= a;
                diff_b[row + x0] += b;
                diff_b[row + x1 + 1] -= b;
            });
        }
        let mut d = vec![0.0; w * h];
        for y in 0..h {
            let (mut ra, mut rb) = (0.0, 0.0);
            for x in 0..w {
                ra += diff_a[y * (w + 1) + x];
                rb += diff_b[y * (w + 1) + x];
                let j = y * w + x;
                d[j] = (ra + p.feat_a[c][j] * rb) / n_region;
            }
        }
        d_features.push(d);
    }
    Ok((value, features::backward(bank, altered, w, h, &d_features)))
}

/// Metric restricted to each label in `labels` (pixels labelled 0 are
/// ignored). Entry `k - 1` holds the value for label `k`.
pub fn hvsq_by_region(
    reference: &[[f64; 3]],
    altered: &[[f64; 3]],
    map: &PoolingMap,
    bank: FeatureBank,
    labels: &[u8],
    region_count: u8,
) -> Result<Vec<f64>> {
    (1..=region_count)
        .map(|k| {
            let mask: Vec<bool> = labels.iter().map(|&l| l == k).collect();
            hvsq(reference, altered, map, bank, Some(&mask))
        })
        .collect()
}
