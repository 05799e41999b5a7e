use std::rc::Rc;

use super::kernels::{self, ConvGeom};
use super::ops::Op;
use super::tensor::Tensor;

fn same_shape(a: &Tensor, b: &Tensor, what: &str) {
    assert_eq!(a.shape(), b.shape(), "{what}: shape mismatch");
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Vec<f64> {
    a.data().iter().map(|&v| f(v)).collect()
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect()
}

/// Volume of everything after the channel axis.
fn spatial(shape: &[usize]) -> usize {
    shape[2..].iter().product()
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Tensor {
        same_shape(self, other, "add");
        Tensor::from_op(self.shape().to_vec(), zip(self, other, |a, b| a + b), Op::Add(self.clone(), other.clone()))
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        same_shape(self, other, "sub");
        Tensor::from_op(self.shape().to_vec(), zip(self, other, |a, b| a - b), Op::Sub(self.clone(), other.clone()))
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        same_shape(self, other, "mul");
        Tensor::from_op(self.shape().to_vec(), zip(self, other, |a, b| a * b), Op::Mul(self.clone(), other.clone()))
    }

    pub fn scale(&self, c: f64) -> Tensor {
        Tensor::from_op(self.shape().to_vec(), map(self, |v| v * c), Op::Scale(self.clone(), c))
    }

    pub fn neg(&self) -> Tensor {
        self.scale(-1.0)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        Tensor::from_op(self.shape().to_vec(), map(self, |v| v + c), Op::AddScalar(self.clone()))
    }

    /// Elementwise product with constant coefficients.
    pub fn mul_const(&self, m: Rc<Vec<f64>>) -> Tensor {
        assert_eq!(m.len(), self.numel(), "mul_const: length mismatch");
        let data = self.data().iter().zip(m.iter()).map(|(a, b)| a * b).collect();
        Tensor::from_op(self.shape().to_vec(), data, Op::MulConst(self.clone(), m))
    }

    pub fn relu(&self) -> Tensor {
        self.leaky_relu(0.0)
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor {
        let m = map(self, |v| if v > 0.0 { 1.0 } else { slope });
        self.mul_const(Rc::new(m))
    }

    pub fn sigmoid(&self) -> Tensor {
        let data = map(self, |v| {
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        });
        Tensor::from_op(self.shape().to_vec(), data, Op::Sigmoid(self.clone()))
    }

    pub fn log(&self) -> Tensor {
        Tensor::from_op(self.shape().to_vec(), map(self, f64::ln), Op::Log(self.clone()))
    }

    pub fn recip(&self) -> Tensor {
        Tensor::from_op(self.shape().to_vec(), map(self, f64::recip), Op::Recip(self.clone()))
    }

    pub fn sqrt(&self) -> Tensor {
        Tensor::from_op(self.shape().to_vec(), map(self, f64::sqrt), Op::Sqrt(self.clone()))
    }

    pub fn square(&self) -> Tensor {
        Tensor::from_op(self.shape().to_vec(), map(self, |v| v * v), Op::Square(self.clone()))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor {
        let inside = |v: f64| (lo..=hi).contains(&v);
        let mask = map(self, |v| if inside(v) { 1.0 } else { 0.0 });
        let outside = map(self, |v| if inside(v) { 0.0 } else { v.clamp(lo, hi) });
        self.mul_const(Rc::new(mask)).add(&Tensor::constant(self.shape(), outside))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&self) -> Tensor {
        let s: f64 = self.data().iter().sum();
        Tensor::from_op(vec![1], vec![s], Op::Sum(self.clone()))
    }

    pub fn mean(&self) -> Tensor {
        self.sum().scale(1.0 / self.numel() as f64)
    }

    /// Broadcasts a one-element tensor to `shape`.
    pub fn expand(&self, shape: &[usize]) -> Tensor {
        assert_eq!(self.numel(), 1, "expand needs one element");
        let n = shape.iter().product();
        Tensor::from_op(shape.to_vec(), vec![self.data()[0]; n], Op::Expand(self.clone()))
    }

    /// Sums everything but the leading axis: `[b, ...] -> [b]`.
    pub fn sum_inner(&self) -> Tensor {
        let b = self.shape()[0];
        let inner = self.numel() / b.max(1);
        let data = (0..b).map(|i| self.data()[i * inner..(i + 1) * inner].iter().sum()).collect();
        Tensor::from_op(vec![b], data, Op::SumInner(self.clone()))
    }

    /// Per-sample mean: `[b, ...] -> [b]`.
    pub fn mean_inner(&self) -> Tensor {
        let inner = self.numel() / self.shape()[0].max(1);
        self.sum_inner().scale(1.0 / inner as f64)
    }

    /// Broadcasts `[b]` along the trailing axes of `shape`.
    pub fn expand_inner(&self, shape: &[usize]) -> Tensor {
        assert_eq!(self.shape(), &shape[..1], "expand_inner: leading axis mismatch");
        let inner: usize = shape[1..].iter().product();
        let mut data = Vec::with_capacity(self.numel() * inner);
        for &v in self.data() {
            data.extend(std::iter::repeat_n(v, inner));
        }
        Tensor::from_op(shape.to_vec(), data, Op::ExpandInner(self.clone()))
    }

    /// Sums over batch and spatial axes: `[b, c, ...] -> [c]`.
    pub fn sum_ch(&self) -> Tensor {
        let (b, c, v) = (self.shape()[0], self.shape()[1], spatial(self.shape()));
        let mut data = vec![0.0; c];
        for bi in 0..b {
            for (ci, acc) in data.iter_mut().enumerate() {
                let off = (bi * c + ci) * v;
                *acc += self.data()[off..off + v].iter().sum::<f64>();
            }
        }
        Tensor::from_op(vec![c], data, Op::SumCh(self.clone()))
    }

    /// Broadcasts a per-channel vector `[c]` to `shape = [b, c, ...]`.
    pub fn expand_ch(&self, shape: &[usize]) -> Tensor {
        assert_eq!(self.shape(), &shape[1..2], "expand_ch: channel mismatch");
        let (b, c, v) = (shape[0], shape[1], spatial(shape));
        let mut data = Vec::with_capacity(b * c * v);
        for _ in 0..b {
            for &x in self.data() {
                data.extend(std::iter::repeat_n(x, v));
            }
        }
        Tensor::from_op(shape.to_vec(), data, Op::ExpandCh(self.clone()))
    }

    /// Adds a per-channel bias.
    pub fn add_bias(&self, bias: &Tensor) -> Tensor {
        self.add(&bias.expand_ch(self.shape()))
    }

    pub fn reshape(&self, shape: &[usize]) -> Tensor {
        assert_eq!(shape.iter().product::<usize>(), self.numel(), "reshape: element count mismatch");
        Tensor::from_op(shape.to_vec(), self.to_vec(), Op::Reshape(self.clone()))
    }

    /// Concatenates along the channel axis (axis 1).
    pub fn concat_ch(&self, other: &Tensor) -> Tensor {
        let (sa, sb) = (self.shape(), other.shape());
        assert!(sa[0] == sb[0] && sa[2..] == sb[2..], "concat_ch: shapes {sa:?} and {sb:?}");
        let (b, ca, cb, v) = (sa[0], sa[1], sb[1], spatial(sa));
        let mut data = Vec::with_capacity(self.numel() + other.numel());
        for bi in 0..b {
            data.extend_from_slice(&self.data()[bi * ca * v..(bi + 1) * ca * v]);
            data.extend_from_slice(&other.data()[bi * cb * v..(bi + 1) * cb * v]);
        }
        let mut shape = sa.to_vec();
        shape[1] = ca + cb;
        Tensor::from_op(shape, data, Op::ConcatCh(self.clone(), other.clone()))
    }

    /// Channels `start..start + len`.
    pub fn slice_ch(&self, start: usize, len: usize) -> Tensor {
        let s = self.shape();
        assert!(start + len <= s[1], "slice_ch out of range");
        let (b, c, v) = (s[0], s[1], spatial(s));
        let mut data = Vec::with_capacity(b * len * v);
        for bi in 0..b {
            data.extend_from_slice(&self.data()[(bi * c + start) * v..(bi * c + start + len) * v]);
        }
        let mut shape = s.to_vec();
        shape[1] = len;
        Tensor::from_op(shape, data, Op::SliceCh(self.clone(), start))
    }

    /// Zero-pads channels so that this tensor occupies `start..` of `total`.
    pub fn pad_ch(&self, start: usize, total: usize) -> Tensor {
        let s = self.shape();
        let (b, c, v) = (s[0], s[1], spatial(s));
        assert!(start + c <= total, "pad_ch out of range");
        let mut data = vec![0.0; b * total * v];
        for bi in 0..b {
            data[(bi * total + start) * v..(bi * total + start + c) * v]
                .copy_from_slice(&self.data()[bi * c * v..(bi + 1) * c * v]);
        }
        let mut shape = s.to_vec();
        shape[1] = total;
        Tensor::from_op(shape, data, Op::PadCh(self.clone(), start))
    }

    /// `[m, k] x [k, n]`.
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        let (sa, sb) = (self.shape(), other.shape());
        assert!(sa.len() == 2 && sb.len() == 2 && sa[1] == sb[0], "matmul: {sa:?} x {sb:?}");
        let data = kernels::matmul(self.data(), other.data(), sa[0], sa[1], sb[1]);
        Tensor::from_op(vec![sa[0], sb[1]], data, Op::MatMul(self.clone(), other.clone()))
    }

    pub fn transpose(&self) -> Tensor {
        let s = self.shape();
        assert_eq!(s.len(), 2, "transpose needs a matrix");
        let (r, c) = (s[0], s[1]);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data()[i * c + j];
            }
        }
        Tensor::from_op(vec![c, r], data, Op::Transpose(self.clone()))
    }

    /// 3D convolution of `[b, cin, n, n, n]` with weights `[cout, cin, k, k, k]`.
    pub fn conv3d(&self, w: &Tensor, g: ConvGeom) -> Tensor {
        let (xs, ws) = (self.shape(), w.shape());
        assert_eq!(xs.len(), 5, "conv3d input must be 5-D");
        assert!(ws[1] == xs[1] && xs[2] == g.in_size && ws[2] == g.kernel, "conv3d: x {xs:?} w {ws:?} {g:?}");
        let (b, cin, cout) = (xs[0], xs[1], ws[0]);
        let data = kernels::conv3d(self.data(), w.data(), b, cin, cout, &g);
        let m = g.out_size;
        Tensor::from_op(vec![b, cout, m, m, m], data, Op::Conv(self.clone(), w.clone(), g))
    }

    /// Transposed convolution: maps `[b, cout, m, m, m]` back to `[b, cin, n, n, n]`.
    pub fn conv3d_transpose(&self, w: &Tensor, g: ConvGeom) -> Tensor {
        let (ys, ws) = (self.shape(), w.shape());
        assert_eq!(ys.len(), 5, "conv3d_transpose input must be 5-D");
        assert!(ws[0] == ys[1] && ys[2] == g.out_size && ws[2] == g.kernel, "conv3d_transpose: y {ys:?} w {ws:?} {g:?}");
        let (b, cout, cin) = (ys[0], ys[1], ws[1]);
        let data = kernels::conv3d_transpose(self.data(), w.data(), b, cin, cout, &g);
        let n = g.in_size;
        Tensor::from_op(vec![b, cin, n, n, n], data, Op::ConvT(self.clone(), w.clone(), g))
    }

    /// Weight-shaped correlation of an input `self` and an output-side tensor `y`.
    pub fn conv3d_weight(&self, y: &Tensor, g: ConvGeom) -> Tensor {
        let (xs, ys) = (self.shape(), y.shape());
        assert!(xs[0] == ys[0] && xs[2] == g.in_size && ys[2] == g.out_size, "conv3d_weight: x {xs:?} y {ys:?}");
        let (b, cin, cout) = (xs[0], xs[1], ys[1]);
        let data = kernels::conv3d_weight(self.data(), y.data(), b, cin, cout, &g);
        let k = g.kernel;
        Tensor::from_op(vec![cout, cin, k, k, k], data, Op::ConvW(self.clone(), y.clone(), g))
    }

    /// `out[j] = self[idx[j]]`, reshaped to `shape`.
    pub fn gather(&self, idx: Rc<Vec<usize>>, shape: &[usize]) -> Tensor {
        assert_eq!(idx.len(), shape.iter().product::<usize>(), "gather: index count mismatch");
        let data = idx.iter().map(|&i| self.data()[i]).collect();
        Tensor::from_op(shape.to_vec(), data, Op::Gather(self.clone(), idx))
    }

    /// `out[idx[j]] += self[j]` into zeros of `shape`.
    pub fn scatter(&self, idx: Rc<Vec<usize>>, shape: &[usize]) -> Tensor {
        assert_eq!(idx.len(), self.numel(), "scatter: index count mismatch");
        let mut data = vec![0.0; shape.iter().product()];
        for (&i, &v) in idx.iter().zip(self.data()) {
            data[i] += v;
        }
        Tensor::from_op(shape.to_vec(), data, Op::Scatter(self.clone(), idx))
    }

    /// 2x2x2 max pooling with stride 2 over `[b, c, n, n, n]`, `n` even.
    pub fn max_pool2(&self) -> Tensor {
        let s = self.shape();
        assert!(s.len() == 5 && s[2].is_multiple_of(2) && s[2] == s[3] && s[3] == s[4], "max_pool2: shape {s:?}");
        let (bc, n) = (s[0] * s[1], s[2]);
        let h = n / 2;
        let x = self.data();
        let mut idx = Vec::with_capacity(bc * h * h * h);
        for plane in 0..bc {
            let base = plane * n * n * n;
            for z in 0..h {
                for y in 0..h {
                    for xx in 0..h {
                        let mut best = base + ((2 * z) * n + 2 * y) * n + 2 * xx;
                        for dz in 0..2 {
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    let i = base + ((2 * z + dz) * n + 2 * y + dy) * n + 2 * xx + dx;
                                    if x[i] > x[best] {
                                        best = i;
                                    }
                                }
                            }
                        }
                        idx.push(best);
                    }
                }
            }
        }
        self.gather(Rc::new(idx), &[s[0], s[1], h, h, h])
    }
}
