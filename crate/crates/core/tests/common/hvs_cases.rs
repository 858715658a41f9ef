//! Perceptual-metric cases shared by the metric tests and the acceptance run.

use fovsplat::camera::DisplayGeometry;
use fovsplat::hvs::{build_pooling_map, hvsq, hvsq_gradient, FeatureBank};
use rand::Rng;

use super::rng;

pub fn random_image(r: &mut impl Rng, n: usize) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| [r.random_range(0.1..0.9), r.random_range(0.1..0.9), r.random_range(0.1..0.9)])
        .collect()
}

/// Fraction of pixel-channels whose analytic gradient agrees with central
/// differences to relative error 1e-3, plus the worst error.
pub fn gradient_agreement(seed: u64, bank: FeatureBank) -> (f64, f64) {
    let mut r = rng(seed);
    let display = DisplayGeometry::new(16, 16, 4.0, [5.0, 7.0]).unwrap();
    let map = build_pooling_map(&display, 0.6, 0.5).unwrap();
    let reference = random_image(&mut r, 256);
    let altered = random_image(&mut r, 256);
    let region: Vec<bool> = (0..256).map(|i| i % 3 != 0).collect();
    let (_, g) = hvsq_gradient(&reference, &altered, &map, bank, Some(&region)).unwrap();
    let h = 1e-4;
    let mut ok = 0;
    let mut worst: f64 = 0.0;
    for j in 0..256 {
        for c in 0..3 {
            let mut a = altered.clone();
            a[j][c] += h;
            let plus = hvsq(&reference, &a, &map, bank, Some(&region)).unwrap();
            a[j][c] -= 2.0 * h;
            let minus = hvsq(&reference, &a, &map, bank, Some(&region)).unwrap();
            let num = (plus - minus) / (2.0 * h);
            let scale = num.abs().max(g[j][c].abs());
            let err = if scale < 1e-10 { 0.0 } else { (num - g[j][c]).abs() / scale };
            worst = worst.max(err);
            if err < 1e-3 {
                ok += 1;
            }
        }
    }
    (ok as f64 / 768.0, worst)
}

/// Reference with period 8 in both directions, so patches placed 8k pixels
/// apart see identical backgrounds.
pub fn periodic_reference(w: usize, h: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut r = rng(seed);
    let tile = random_image(&mut r, 64);
    (0..w * h).map(|i| tile[(i / w % 8) * 8 + (i % w) % 8]).collect()
}

/// Leniency fixture: ppd 8/3 puts 30 degrees exactly 80 px from the gaze.
pub fn leniency_case(seed: u64) -> (f64, f64) {
    let (w, h) = (160usize, 64usize);
    let ppd = 8.0 / 3.0;
    let gaze = [24.0, 32.0];
    let display = DisplayGeometry::new(w as u32, h as u32, ppd, gaze).unwrap();
    let map = build_pooling_map(&display, 0.25, 0.5).unwrap();
    let reference = periodic_reference(w, h, seed);
    let mut r = rng(seed ^ 0x5eed);
    let patch: Vec<[f64; 3]> = (0..64)
        .map(|_| [r.random_range(-0.2..0.2), r.random_range(-0.2..0.2), r.random_range(-0.2..0.2)])
        .collect();
    let place = |x0: usize| {
        let mut img = reference.clone();
        for py in 0..8 {
            for px in 0..8 {
                let i = (28 + py) * w + x0 + px;
                for c in 0..3 {
                    img[i][c] = (img[i][c] + patch[py * 8 + px][c]).clamp(0.0, 1.0);
                }
            }
        }
        img
    };
    // Patch centres at x = 24 (0 degrees) and x = 104 (30 degrees).
    let near = place(20);
    let far = place(100);
    let at0 = hvsq(&reference, &near, &map, FeatureBank::Standard, None).unwrap();
    let at30 = hvsq(&reference, &far, &map, FeatureBank::Standard, None).unwrap();
    (at0, at30)
}
