use std::rc::Rc;

use super::kernels::ConvGeom;
use super::tensor::Tensor;

/// Recorded operation with its inputs.
///
/// Every backward rule is written in terms of other recorded operations, so
/// gradients can themselves be differentiated.
pub(crate) enum Op {
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Scale(Tensor, f64),
    AddScalar(Tensor),
    MulConst(Tensor, Rc<Vec<f64>>),
    Sigmoid(Tensor),
    Log(Tensor),
    Recip(Tensor),
    Sqrt(Tensor),
    Square(Tensor),
    Sum(Tensor),
    Expand(Tensor),
    SumInner(Tensor),
    ExpandInner(Tensor),
    SumCh(Tensor),
    ExpandCh(Tensor),
    Reshape(Tensor),
    ConcatCh(Tensor, Tensor),
    SliceCh(Tensor, usize),
    PadCh(Tensor, usize),
    MatMul(Tensor, Tensor),
    Transpose(Tensor),
    Conv(Tensor, Tensor, ConvGeom),
    ConvT(Tensor, Tensor, ConvGeom),
    ConvW(Tensor, Tensor, ConvGeom),
    Gather(Tensor, Rc<Vec<usize>>),
    Scatter(Tensor, Rc<Vec<usize>>),
}

impl Op {
    pub(crate) fn parents(&self) -> Vec<&Tensor> {
        use Op::*;
        match self {
            Add(a, b) | Sub(a, b) | Mul(a, b) | ConcatCh(a, b) | MatMul(a, b) => vec![a, b],
            Conv(a, b, _) | ConvT(a, b, _) | ConvW(a, b, _) => vec![a, b],
            Scale(a, _) | AddScalar(a) | MulConst(a, _) | Sigmoid(a) | Log(a) | Recip(a) | Sqrt(a) | Square(a) => {
                vec![a]
            }
            Sum(a) | Expand(a) | SumInner(a) | ExpandInner(a) | SumCh(a) | ExpandCh(a) | Reshape(a) => vec![a],
            SliceCh(a, _) | PadCh(a, _) | Transpose(a) | Gather(a, _) | Scatter(a, _) => vec![a],
        }
    }

    /// Gradients for each parent given the output gradient `g`.
    pub(crate) fn backward(&self, out: &Tensor, g: &Tensor, wants: &[bool]) -> Vec<Option<Tensor>> {
        use Op::*;
        let w0 = wants[0];
        let w1 = wants.get(1).copied().unwrap_or(false);
        let only = |t: Tensor| vec![Some(t)];
        match self {
            Add(_, _) => vec![w0.then(|| g.clone()), w1.then(|| g.clone())],
            Sub(_, _) => vec![w0.then(|| g.clone()), w1.then(|| g.neg())],
            Mul(a, b) => vec![w0.then(|| g.mul(b)), w1.then(|| g.mul(a))],
            Scale(_, c) => only(g.scale(*c)),
            AddScalar(_) => only(g.clone()),
            MulConst(_, m) => only(g.mul_const(m.clone())),
            Sigmoid(_) => only(g.mul(&out.mul(&out.neg().add_scalar(1.0)))),
            Log(a) => only(g.mul(&a.recip())),
            Recip(_) => only(g.mul(&out.square()).neg()),
            Sqrt(_) => only(g.mul(&out.recip()).scale(0.5)),
            Square(a) => only(g.mul(a).scale(2.0)),
            Sum(a) => only(g.expand(a.shape())),
            Expand(_) => only(g.sum()),
            SumInner(a) => only(g.expand_inner(a.shape())),
            ExpandInner(_) => only(g.sum_inner()),
            SumCh(a) => only(g.expand_ch(a.shape())),
            ExpandCh(_) => only(g.sum_ch()),
            Reshape(a) => only(g.reshape(a.shape())),
            ConcatCh(a, b) => {
                let ca = a.shape()[1];
                let cb = b.shape()[1];
                vec![w0.then(|| g.slice_ch(0, ca)), w1.then(|| g.slice_ch(ca, cb))]
            }
            SliceCh(a, start) => only(g.pad_ch(*start, a.shape()[1])),
            PadCh(a, start) => only(g.slice_ch(*start, a.shape()[1])),
            MatMul(a, b) => vec![
                w0.then(|| g.matmul(&b.transpose())),
                w1.then(|| a.transpose().matmul(g)),
            ],
            Transpose(_) => only(g.transpose()),
            Conv(x, w, geom) => vec![
                w0.then(|| g.conv3d_transpose(w, *geom)),
                w1.then(|| x.conv3d_weight(g, *geom)),
            ],
            ConvT(y, w, geom) => vec![
                w0.then(|| g.conv3d(w, *geom)),
                w1.then(|| g.conv3d_weight(y, *geom)),
            ],
            ConvW(x, y, geom) => vec![
                w0.then(|| y.conv3d_transpose(g, *geom)),
                w1.then(|| x.conv3d(g, *geom)),
            ],
            Gather(a, idx) => only(g.scatter(idx.clone(), a.shape())),
            Scatter(a, idx) => only(g.gather(idx.clone(), a.shape())),
        }
    }
}
