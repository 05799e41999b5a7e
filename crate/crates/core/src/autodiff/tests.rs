use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..shape.iter().product::<usize>()).map(|_| rng.gen_range(lo..hi)).collect()
}

type ScalarFn = dyn Fn(&[Tensor]) -> Tensor;

fn eval(f: &ScalarFn, shapes: &[Vec<usize>], data: &[Vec<f64>]) -> f64 {
    no_grad(|| {
        let xs: Vec<Tensor> = shapes.iter().zip(data).map(|(s, d)| Tensor::constant(s, d.clone())).collect();
        f(&xs).item()
    })
}

/// Compares reverse-mode gradients of `f` with central differences.
fn check_grad(f: &ScalarFn, shapes: &[Vec<usize>], data: &[Vec<f64>], tol: f64) {
    let xs: Vec<Tensor> = shapes.iter().zip(data).map(|(s, d)| Tensor::variable(s, d.clone())).collect();
    let out = f(&xs);
    let refs: Vec<&Tensor> = xs.iter().collect();
    let gs = grad(&out, &refs, false).unwrap();
    let h = 1e-6;
    for (k, g) in gs.iter().enumerate() {
        for i in 0..data[k].len() {
            let mut p = data.to_vec();
            p[k][i] += h;
            let mut m = data.to_vec();
            m[k][i] -= h;
            let fd = (eval(f, shapes, &p) - eval(f, shapes, &m)) / (2.0 * h);
            let an = g.data()[i];
            assert!(
                (fd - an).abs() <= tol * (1.0 + fd.abs()),
                "input {k} element {i}: analytic {an} vs fd {fd}"
            );
        }
    }
}

/// Checks the gradient of `|grad f|^2` obtained by double backward against
/// central differences of first-order gradients.
fn check_double(f: &ScalarFn, shapes: &[Vec<usize>], data: &[Vec<f64>], tol: f64) {
    let penalty = |data: &[Vec<f64>], create: bool| -> (f64, Vec<Tensor>, Vec<Tensor>) {
        let xs: Vec<Tensor> = shapes.iter().zip(data).map(|(s, d)| Tensor::variable(s, d.clone())).collect();
        let refs: Vec<&Tensor> = xs.iter().collect();
        let out = f(&xs);
        let g = grad(&out, &refs[..1], create).unwrap();
        let p = g[0].square().sum();
        (p.item(), vec![p], xs)
    };
    let (_, p, xs) = penalty(data, true);
    let refs: Vec<&Tensor> = xs.iter().collect();
    let gs = grad(&p[0], &refs, false).unwrap();
    let h = 1e-5;
    for (k, g) in gs.iter().enumerate() {
        for i in 0..data[k].len() {
            let mut a = data.to_vec();
            a[k][i] += h;
            let mut b = data.to_vec();
            b[k][i] -= h;
            let fd = (penalty(&a, false).0 - penalty(&b, false).0) / (2.0 * h);
            let an = g.data()[i];
            assert!(
                (fd - an).abs() <= tol * (1.0 + fd.abs()),
                "input {k} element {i}: analytic {an} vs fd {fd}"
            );
        }
    }
}

#[test]
fn elementwise_gradients() {
    let s = vec![vec![2, 3], vec![2, 3]];
    let d = vec![random(&s[0], 1, 0.2, 1.5), random(&s[1], 2, -1.0, 1.0)];
    let f: Box<ScalarFn> = Box::new(|x| {
        let a = x[0].mul(&x[1]).add(&x[0].log()).sub(&x[1].sigmoid());
        let b = x[0].sqrt().mul(&x[1].square()).add(&x[0].recip().scale(0.3));
        a.add(&b.add_scalar(2.0)).square().mean()
    });
    check_grad(&*f, &s, &d, 1e-6);
}

#[test]
fn piecewise_gradients() {
    let s = vec![vec![4, 5]];
    let d = vec![random(&s[0], 3, -1.0, 1.0)];
    let f: Box<ScalarFn> = Box::new(|x| {
        let a = x[0].leaky_relu(0.2).mul(&x[0]);
        let b = x[0].relu().add(&x[0].clamp(-0.5, 0.5).scale(3.0));
        a.add(&b).sum()
    });
    check_grad(&*f, &s, &d, 1e-6);
}

#[test]
fn reduction_and_shape_gradients() {
    let s = vec![vec![2, 3, 2, 2, 2], vec![3], vec![2, 1, 2, 2, 2]];
    let d = vec![random(&s[0], 4, -1.0, 1.0), random(&s[1], 5, -1.0, 1.0), random(&s[2], 6, -1.0, 1.0)];
    let f: Box<ScalarFn> = Box::new(|x| {
        let a = x[0].add_bias(&x[1]);
        let c = a.concat_ch(&x[2]);
        let sl = c.slice_ch(1, 3).pad_ch(2, 6);
        let per = sl.square().mean_inner();
        let e = per.expand_inner(&[2, 5]).mul(&x[1].sum().expand(&[2, 5]));
        let ch = c.sum_ch().square().sum();
        e.sum().add(&ch).add(&c.reshape(&[2, 32]).sigmoid().sum())
    });
    check_grad(&*f, &s, &d, 1e-6);
}

#[test]
fn matmul_gradients() {
    let s = vec![vec![3, 4], vec![4, 2]];
    let d = vec![random(&s[0], 7, -1.0, 1.0), random(&s[1], 8, -1.0, 1.0)];
    let f: Box<ScalarFn> = Box::new(|x| x[0].matmul(&x[1]).sigmoid().transpose().square().sum());
    check_grad(&*f, &s, &d, 1e-6);
}

#[test]
fn conv_gradients() {
    for &stride in &[1usize, 2] {
        let g = ConvGeom::same(4, stride, 4);
        let m = g.out_size;
        let s = vec![vec![2, 2, 4, 4, 4], vec![3, 2, 4, 4, 4], vec![2, 3, m, m, m]];
        let d = vec![random(&s[0], 9, -1.0, 1.0), random(&s[1], 10, -0.5, 0.5), random(&s[2], 11, -1.0, 1.0)];
        let f: Box<ScalarFn> = Box::new(move |x| {
            let y = x[0].conv3d(&x[1], g).sigmoid();
            let back = x[2].conv3d_transpose(&x[1], g).mul(&x[0]);
            let w = x[0].conv3d_weight(&x[2], g).mul(&x[1]);
            y.mul(&x[2]).sum().add(&back.sum()).add(&w.sum())
        });
        check_grad(&*f, &s, &d, 1e-6);
    }
}

#[test]
fn pooling_gradients() {
    let s = vec![vec![1, 2, 4, 4, 4]];
    let d = vec![random(&s[0], 12, -1.0, 1.0)];
    let f: Box<ScalarFn> = Box::new(|x| x[0].max_pool2().square().sum());
    check_grad(&*f, &s, &d, 1e-6);
}

#[test]
fn double_backward_through_conv_network() {
    let g1 = ConvGeom::same(4, 2, 4);
    let g2 = ConvGeom::same(4, 2, 2);
    let s = vec![vec![2, 2, 4, 4, 4], vec![3, 2, 4, 4, 4], vec![1, 3, 4, 4, 4], vec![3]];
    let d = vec![
        random(&s[0], 13, 0.0, 1.0),
        random(&s[1], 14, -0.4, 0.4),
        random(&s[2], 15, -0.4, 0.4),
        random(&s[3], 16, -0.1, 0.1),
    ];
    let f: Box<ScalarFn> = Box::new(move |x| {
        let h = x[0].conv3d(&x[1], g1).add_bias(&x[3]).leaky_relu(0.2);
        let o = h.conv3d(&x[2], g2).sigmoid();
        o.mean_inner().sum()
    });
    check_double(&*f, &s, &d, 1e-5);
}

#[test]
fn double_backward_elementwise() {
    let s = vec![vec![3, 2], vec![2, 2]];
    let d = vec![random(&s[0], 17, 0.3, 1.2), random(&s[1], 18, -1.0, 1.0)];
    let f: Box<ScalarFn> = Box::new(|x| {
        let a = x[0].matmul(&x[1]).sigmoid();
        let b = x[0].log().add(&x[0].sqrt()).add(&x[0].recip()).square();
        a.sum().add(&b.sum())
    });
    check_double(&*f, &s, &d, 1e-5);
}

#[test]
fn unused_inputs_get_zero_and_constants_are_skipped() {
    let a = Tensor::variable(&[2], vec![1.0, 2.0]);
    let b = Tensor::variable(&[3], vec![1.0, 2.0, 3.0]);
    let c = Tensor::constant(&[2], vec![5.0, 7.0]);
    let out = a.mul(&c).sum();
    let g = grad(&out, &[&a, &b], false).unwrap();
    assert_eq!(g[0].data(), &[5.0, 7.0]);
    assert_eq!(g[1].data(), &[0.0, 0.0, 0.0]);
    assert!(!g[0].requires_grad());
}

#[test]
fn no_grad_records_nothing() {
    let a = Tensor::variable(&[2], vec![1.0, 2.0]);
    let out = no_grad(|| a.square().sum());
    assert!(!out.requires_grad());
    assert!(grad_enabled());
    let g = grad(&out, &[&a], false).unwrap();
    assert_eq!(g[0].data(), &[0.0, 0.0]);
}

#[test]
fn shared_subexpressions_accumulate() {
    let a = Tensor::variable(&[1], vec![3.0]);
    let b = a.square();
    let out = b.add(&b).add(&a);
    let g = grad(&out, &[&a], false).unwrap();
    assert_eq!(g[0].item(), 13.0);
}

#[test]
fn non_scalar_grad_is_an_error() {
    let a = Tensor::variable(&[2], vec![1.0, 2.0]);
    assert!(grad(&a.square(), &[&a], false).is_err());
}
