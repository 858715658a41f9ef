//! Real spherical-harmonic basis up to degree 3, with direction derivatives.
//!
//! Sign and ordering conventions follow the usual Gaussian-splatting assets so
//! that imported coefficients render with their intended colours.

use crate::model::SH_C0;

const C1: f64 = 0.488_602_511_902_919_9;
const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Basis values for a unit direction; only the first `count` entries are filled.
pub fn basis(dir: [f64; 3], count: usize) -> [f64; 16] {
    let [x, y, z] = dir;
    let mut b = [0.0; 16];
    b[0] = SH_C0;
    if count > 1 {
        b[1] = -C1 * y;
        b[2] = C1 * z;
        b[3] = -C1 * x;
    }
    if count > 4 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b[4] = C2[0] * x * y;
        b[5] = C2[1] * y * z;
        b[6] = C2[2] * (2.0 * zz - xx - yy);
        b[7] = C2[3] * x * z;
        b[8] = C2[4] * (xx - yy);
        if count > 9 {
            b[9] = C3[0] * y * (3.0 * xx - yy);
            b[10] = C3[1] * x * y * z;
            b[11] = C3[2] * y * (4.0 * zz - xx - yy);
            b[12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
            b[13] = C3[4] * x * (4.0 * zz - xx - yy);
            b[14] = C3[5] * z * (xx - yy);
            b[15] = C3[6] * x * (xx - 3.0 * yy);
        }
    }
    b
}

/// Partial derivatives `d basis[k] / d (x, y, z)` treating the components as free.
pub fn basis_gradient(dir: [f64; 3], count: usize) -> [[f64; 3]; 16] {
    let [x, y, z] = dir;
    let mut g = [[0.0; 3]; 16];
    if count > 1 {
        g[1] = [0.0, -C1, 0.0];
        g[2] = [0.0, 0.0, C1];
        g[3] = [-C1, 0.0, 0.0];
    }
    if count > 4 {
        g[4] = [C2[0] * y, C2[0] * x, 0.0];
        g[5] = [0.0, C2[1] * z, C2[1] * y];
        g[6] = [-2.0 * C2[2] * x, -2.0 * C2[2] * y, 4.0 * C2[2] * z];
        g[7] = [C2[3] * z, 0.0, C2[3] * x];
        g[8] = [2.0 * C2[4] * x, -2.0 * C2[4] * y, 0.0];
        if count > 9 {
            let (xx, yy, zz) = (x * x, y * y, z * z);
            let c = C3;
            g[9] = [6.0 * c[0] * x * y, c[0] * (3.0 * xx - 3.0 * yy), 0.0];
            g[10] = [c[1] * y * z, c[1] * x * z, c[1] * x * y];
            g[11] = [
                -2.0 * c[2] * x * y,
                c[2] * (4.0 * zz - xx - 3.0 * yy),
                8.0 * c[2] * y * z,
            ];
            g[12] = [
                -6.0 * c[3] * x * z,
                -6.0 * c[3] * y * z,
                c[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy),
            ];
            g[13] = [
                c[4] * (4.0 * zz - 3.0 * xx - yy),
                -2.0 * c[4] * x * y,
                8.0 * c[4] * x * z,
            ];
            g[14] = [2.0 * c[5] * x * z, -2.0 * c[5] * y * z, c[5] * (xx - yy)];
            g[15] = [c[6] * (3.0 * xx - 3.0 * yy), -6.0 * c[6] * x * y, 0.0];
        }
    }
    g
}

/// View-dependent part of the colour, `sum_{k>=1} sh[k] * Y_k(dir)`, per channel.
pub fn eval_rest(sh: &[[f64; 3]], dir: [f64; 3]) -> [f64; 3] {
    let b = basis(dir, sh.len());
    let mut out = [0.0; 3];
    for (k, coeff) in sh.iter().enumerate().skip(1) {
        for c in 0..3 {
            out[c] += coeff[c] * b[k];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_matches_finite_differences() {
        let dir = [0.3, -0.5, 0.81];
        let g = basis_gradient(dir, 16);
        let h = 1e-6;
        for axis in 0..3 {
            let mut p = dir;
            let mut m = dir;
            p[axis] += h;
            m[axis] -= h;
            let bp = basis(p, 16);
            let bm = basis(m, 16);
            for k in 0..16 {
                let fd = (bp[k] - bm[k]) / (2.0 * h);
                assert!((fd - g[k][axis]).abs() < 1e-7, "k={k} axis={axis}");
            }
        }
    }

    #[test]
    fn band_one_is_linear_in_direction() {
        let b = basis([0.0, 0.0, 1.0], 4);
        assert_eq!(b[1], 0.0);
        assert_eq!(b[2], C1);
        assert_eq!(b[3], 0.0);
    }

    #[test]
    fn degree_zero_has_no_view_dependence() {
        let sh = [[1.0, 2.0, 3.0]];
        assert_eq!(eval_rest(&sh, [0.6, 0.0, 0.8]), [0.0; 3]);
    }
}
