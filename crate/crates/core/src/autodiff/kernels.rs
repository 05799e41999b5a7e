//! Dense numeric kernels: GEMM wrappers and strided 3D convolution via im2col.
//!
//! All three convolution kernels are partial derivatives of the same trilinear
//! form `sum y[b,o,p] * w[o,i,q] * x[b,i,p*s+q-pad]`:
//! [`conv3d`] contracts out `y`, [`conv3d_transpose`] contracts out `x`, and
//! [`conv3d_weight`] contracts out `w`.

use serde::{Deserialize, Serialize};

/// Geometry of a cubic 3D convolution.
///
/// `in_size` is the spatial edge on the convolution input side and
/// `out_size = (in_size + pad + pad_hi - kernel) / stride + 1` on the output side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvGeom {
    pub kernel: usize,
    pub stride: usize,
    /// Zero padding before the first input voxel on each axis.
    pub pad: usize,
    pub in_size: usize,
    pub out_size: usize,
}

impl ConvGeom {
    /// "Same"-style geometry: `out = ceil(in / stride)` with the total padding
    /// split so the smaller half comes first.
    pub fn same(kernel: usize, stride: usize, in_size: usize) -> Self {
        let out_size = in_size.div_ceil(stride);
        let total = ((out_size - 1) * stride + kernel).saturating_sub(in_size);
        Self {
            kernel,
            stride,
            pad: total / 2,
            in_size,
            out_size,
        }
    }

    pub fn taps(&self) -> usize {
        self.kernel * self.kernel * self.kernel
    }

    pub fn in_vol(&self) -> usize {
        self.in_size * self.in_size * self.in_size
    }

    pub fn out_vol(&self) -> usize {
        self.out_size * self.out_size * self.out_size
    }

    /// Output positions `p` along one axis for which `p*stride + q - pad` is inside the input.
    #[inline]
    fn valid_range(&self, q: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let off = q as isize - self.pad as isize;
        // p*s + off >= 0  and  p*s + off <= in-1
        let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        let hi_num = self.in_size as isize - 1 - off;
        let hi = if hi_num < 0 { -1 } else { hi_num / s };
        let hi = hi.min(self.out_size as isize - 1);
        if hi < lo {
            (0, 0)
        } else {
            (lo as usize, hi as usize + 1)
        }
    }
}

/// `c (m x n) = alpha * a (m x k) * b (k x n) + beta * c`, all with explicit strides.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
    rsc: isize,
    csc: isize,
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: callers pass slices whose extents cover every strided index.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

/// Row-major `[m, k] x [k, n]`.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    gemm(m, k, n, a, k as isize, 1, b, n as isize, 1, &mut c, n as isize, 1, 0.0);
    c
}

/// Maximum number of doubles held by one im2col buffer.
const COL_BUDGET: usize = 1 << 20;

/// Output z-planes processed per im2col chunk.
fn planes_per_chunk(g: &ConvGeom, channels: usize) -> usize {
    let per_plane = channels * g.taps() * g.out_size * g.out_size;
    (COL_BUDGET / per_plane.max(1)).clamp(1, g.out_size)
}

/// Fills `col[(i, q), p]` for output planes `z0..z1` of one sample.
fn im2col(x: &[f64], channels: usize, g: &ConvGeom, z0: usize, z1: usize, col: &mut [f64]) {
    let (n_in, n_out, k, s) = (g.in_size, g.out_size, g.kernel, g.stride);
    let cols = (z1 - z0) * n_out * n_out;
    let mut row = 0;
    for i in 0..channels {
        let xc = &x[i * g.in_vol()..(i + 1) * g.in_vol()];
        for qz in 0..k {
            let (zlo, zhi) = g.valid_range(qz);
            for qy in 0..k {
                let (ylo, yhi) = g.valid_range(qy);
                for qx in 0..k {
                    let (xlo, xhi) = g.valid_range(qx);
                    let dst = &mut col[row * cols..(row + 1) * cols];
                    dst.fill(0.0);
                    for pz in z0.max(zlo)..z1.min(zhi).max(z0.max(zlo)) {
                        let iz = pz * s + qz - g.pad;
                        for py in ylo..yhi {
                            let iy = py * s + qy - g.pad;
                            let src = &xc[(iz * n_in + iy) * n_in..];
                            let d = &mut dst[((pz - z0) * n_out + py) * n_out..];
                            for px in xlo..xhi {
                                d[px] = src[px * s + qx - g.pad];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Adds `col[(i, q), p]` back onto the input positions it was gathered from.
fn col2im(col: &[f64], channels: usize, g: &ConvGeom, z0: usize, z1: usize, x: &mut [f64]) {
    let (n_in, n_out, k, s) = (g.in_size, g.out_size, g.kernel, g.stride);
    let cols = (z1 - z0) * n_out * n_out;
    let mut row = 0;
    for i in 0..channels {
        let xc = &mut x[i * g.in_vol()..(i + 1) * g.in_vol()];
        for qz in 0..k {
            let (zlo, zhi) = g.valid_range(qz);
            for qy in 0..k {
                let (ylo, yhi) = g.valid_range(qy);
                for qx in 0..k {
                    let (xlo, xhi) = g.valid_range(qx);
                    let src = &col[row * cols..(row + 1) * cols];
                    for pz in z0.max(zlo)..z1.min(zhi).max(z0.max(zlo)) {
                        let iz = pz * s + qz - g.pad;
                        for py in ylo..yhi {
                            let iy = py * s + qy - g.pad;
                            let base = (iz * n_in + iy) * n_in;
                            let sr = &src[((pz - z0) * n_out + py) * n_out..];
                            for px in xlo..xhi {
                                xc[base + px * s + qx - g.pad] += sr[px];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// `y[b, o, p] = sum_{i, q} w[o, i, q] * x[b, i, p*s + q - pad]`.
pub fn conv3d(x: &[f64], w: &[f64], batch: usize, cin: usize, cout: usize, g: &ConvGeom) -> Vec<f64> {
    let (vin, vout, kk) = (g.in_vol(), g.out_vol(), cin * g.taps());
    let mut y = vec![0.0; batch * cout * vout];
    let step = planes_per_chunk(g, cin);
    let mut col = vec![0.0; kk * step * g.out_size * g.out_size];
    for b in 0..batch {
        let xb = &x[b * cin * vin..(b + 1) * cin * vin];
        let yb = &mut y[b * cout * vout..(b + 1) * cout * vout];
        for z0 in (0..g.out_size).step_by(step) {
            let z1 = (z0 + step).min(g.out_size);
            let cols = (z1 - z0) * g.out_size * g.out_size;
            im2col(xb, cin, g, z0, z1, &mut col);
            let off = z0 * g.out_size * g.out_size;
            gemm(
                cout, kk, cols, w, kk as isize, 1, &col, cols as isize, 1,
                &mut yb[off..], vout as isize, 1, 0.0,
            );
        }
    }
    y
}

/// Adjoint of [`conv3d`] in `x`: maps `y [b, cout, out^3]` to `x [b, cin, in^3]`.
pub fn conv3d_transpose(y: &[f64], w: &[f64], batch: usize, cin: usize, cout: usize, g: &ConvGeom) -> Vec<f64> {
    let (vin, vout, kk) = (g.in_vol(), g.out_vol(), cin * g.taps());
    let mut x = vec![0.0; batch * cin * vin];
    let step = planes_per_chunk(g, cin);
    let mut col = vec![0.0; kk * step * g.out_size * g.out_size];
    for b in 0..batch {
        let yb = &y[b * cout * vout..(b + 1) * cout * vout];
        let xb = &mut x[b * cin * vin..(b + 1) * cin * vin];
        for z0 in (0..g.out_size).step_by(step) {
            let z1 = (z0 + step).min(g.out_size);
            let cols = (z1 - z0) * g.out_size * g.out_size;
            let off = z0 * g.out_size * g.out_size;
            // col = w^T (kk x cout) * y_chunk (cout x cols)
            gemm(
                kk, cout, cols, w, 1, kk as isize, &yb[off..], vout as isize, 1,
                &mut col, cols as isize, 1, 0.0,
            );
            col2im(&col, cin, g, z0, z1, xb);
        }
    }
    x
}

/// Adjoint of [`conv3d`] in `w`: `w[o, i, q] = sum_{b, p} y[b, o, p] * x[b, i, p*s + q - pad]`.
pub fn conv3d_weight(x: &[f64], y: &[f64], batch: usize, cin: usize, cout: usize, g: &ConvGeom) -> Vec<f64> {
    let (vin, vout, kk) = (g.in_vol(), g.out_vol(), cin * g.taps());
    let mut w = vec![0.0; cout * kk];
    let step = planes_per_chunk(g, cin);
    let mut col = vec![0.0; kk * step * g.out_size * g.out_size];
    for b in 0..batch {
        let xb = &x[b * cin * vin..(b + 1) * cin * vin];
        let yb = &y[b * cout * vout..(b + 1) * cout * vout];
        for z0 in (0..g.out_size).step_by(step) {
            let z1 = (z0 + step).min(g.out_size);
            let cols = (z1 - z0) * g.out_size * g.out_size;
            let off = z0 * g.out_size * g.out_size;
            im2col(xb, cin, g, z0, z1, &mut col);
            // w += y_chunk (cout x cols) * col^T (cols x kk)
            gemm(
                cout, cols, kk, &yb[off..], vout as isize, 1, &col, 1, cols as isize,
                &mut w, kk as isize, 1, 1.0,
            );
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct evaluation of the trilinear form's `y` contraction.
    fn conv_naive(x: &[f64], w: &[f64], b: usize, ci: usize, co: usize, g: &ConvGeom) -> Vec<f64> {
        let (n, m, k) = (g.in_size as isize, g.out_size, g.kernel);
        let mut y = vec![0.0; b * co * g.out_vol()];
        for bb in 0..b {
            for o in 0..co {
                for pz in 0..m {
                    for py in 0..m {
                        for px in 0..m {
                            let mut acc = 0.0;
                            for i in 0..ci {
                                for qz in 0..k {
                                    for qy in 0..k {
                                        for qx in 0..k {
                                            let iz = (pz * g.stride + qz) as isize - g.pad as isize;
                                            let iy = (py * g.stride + qy) as isize - g.pad as isize;
                                            let ix = (px * g.stride + qx) as isize - g.pad as isize;
                                            if iz < 0 || iy < 0 || ix < 0 || iz >= n || iy >= n || ix >= n {
                                                continue;
                                            }
                                            let xi = ((bb * ci + i) as isize * n * n * n + (iz * n + iy) * n + ix) as usize;
                                            let wi = ((o * ci + i) * k + qz) * k * k + qy * k + qx;
                                            acc += w[wi] * x[xi];
                                        }
                                    }
                                }
                            }
                            y[((bb * co + o) * m + pz) * m * m + py * m + px] = acc;
                        }
                    }
                }
            }
        }
        y
    }

    fn lcg(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn same_geometry() {
        let g = ConvGeom::same(4, 1, 16);
        assert_eq!((g.out_size, g.pad), (16, 1));
        let g = ConvGeom::same(4, 2, 16);
        assert_eq!((g.out_size, g.pad), (8, 1));
    }

    #[test]
    fn conv_matches_naive_and_adjoints_agree() {
        for &(n, stride, ci, co, b) in &[(6usize, 1usize, 2usize, 3usize, 2usize), (8, 2, 3, 2, 1), (5, 2, 1, 2, 2)] {
            let g = ConvGeom::same(4, stride, n);
            let x = lcg(b * ci * g.in_vol(), 1);
            let w = lcg(co * ci * g.taps(), 2);
            let yr = lcg(b * co * g.out_vol(), 3);
            let y = conv3d(&x, &w, b, ci, co, &g);
            let yn = conv_naive(&x, &w, b, ci, co, &g);
            assert!(y.iter().zip(&yn).all(|(a, c)| (a - c).abs() < 1e-12));
            // <y', conv(x, w)> = <conv_t(y', w), x> = <conv_w(x, y'), w>
            let t0 = dot(&yr, &y);
            let t1 = dot(&conv3d_transpose(&yr, &w, b, ci, co, &g), &x);
            let t2 = dot(&conv3d_weight(&x, &yr, b, ci, co, &g), &w);
            assert!((t0 - t1).abs() < 1e-9 * t0.abs().max(1.0));
            assert!((t0 - t2).abs() < 1e-9 * t0.abs().max(1.0));
        }
    }

    #[test]
    fn chunked_im2col_matches_single_chunk() {
        // large enough that the col budget splits the output planes
        let g = ConvGeom::same(4, 1, 40);
        let ci = 2;
        assert!(planes_per_chunk(&g, ci) < g.out_size);
        let x = lcg(ci * g.in_vol(), 5);
        let w = lcg(ci * g.taps(), 6);
        let y = conv3d(&x, &w, 1, ci, 1, &g);
        let probe = [0usize, 1234, 40 * 40 * 17 + 5, g.out_vol() - 1];
        let yn = conv_naive(&x, &w, 1, ci, 1, &g);
        for &p in &probe {
            assert!((y[p] - yn[p]).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_small() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        assert_eq!(matmul(&a, &b, 2, 3, 2), vec![4.0, 5.0, 10.0, 11.0]);
    }
}
