//! Reverse-mode differentiation over a per-sample computation record.

use super::layers::{col2im, im2col, Conv2d, Linear};
use super::params::{Grads, ParamId, Params};
use super::tensor::Tensor;
use crate::scalar::{gemm_nt_acc, Scalar};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Input,
    Conv { x: Var, conv: Conv2d, cols: Vec<T> },
    Linear { x: Var, lin: Linear },
    Relu { x: Var },
    Add { a: Var, b: Var },
    AvgPool2 { x: Var },
    Upsample2 { x: Var },
    Concat { xs: Vec<Var> },
    ChannelScale { x: Var, scale: ParamId },
    GlobalAvg { x: Var },
    WeightedPool { x: Var, weights: Vec<T> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

pub struct Tape<'p, T> {
    params: &'p Params<T>,
    nodes: Vec<Node<T>>,
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p Params<T>) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Input)
    }

    pub fn conv(&mut self, x: Var, conv: &Conv2d) -> Var {
        let xin = &self.nodes[x.0].value;
        assert_eq!(xin.c, conv.cin, "conv input channels");
        let (ho, wo) = conv.out_size(xin.h, xin.w);
        let n = ho * wo;
        let kk = conv.cin * conv.kernel * conv.kernel;
        let w = self.params.get(conv.weight);
        let b = self.params.get(conv.bias);
        let mut out = Tensor::zeros(conv.cout, ho, wo);
        for (co, &bias) in b.iter().enumerate() {
            out.channel_mut(co).iter_mut().for_each(|v| *v = bias);
        }
        let cols = if conv.is_pointwise() {
            T::gemm(conv.cout, kk, n, w, false, &xin.data, false, &mut out.data, true);
            Vec::new()
        } else {
            let mut cols = vec![T::zero(); kk * n];
            im2col(&xin.data, xin.h, xin.w, conv, ho, wo, &mut cols);
            T::gemm(conv.cout, kk, n, w, false, &cols, false, &mut out.data, true);
            cols
        };
        self.push(
            out,
            Op::Conv {
                x,
                conv: *conv,
                cols,
            },
        )
    }

    pub fn linear(&mut self, x: Var, lin: &Linear) -> Var {
        let xin = &self.nodes[x.0].value;
        assert_eq!(xin.len(), lin.fan_in, "linear fan-in");
        let mut out = self.params.get(lin.bias).to_vec();
        T::gemm(
            lin.fan_out,
            lin.fan_in,
            1,
            self.params.get(lin.weight),
            false,
            &xin.data,
            false,
            &mut out,
            true,
        );
        self.push(Tensor::vector(out), Op::Linear { x, lin: *lin })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.nodes[x.0].value.clone();
        out.data.iter_mut().for_each(|v| *v = v.max(T::zero()));
        self.push(out, Op::Relu { x })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        let bv = &self.nodes[b.0].value;
        assert!(out.same_shape(bv), "add shape mismatch");
        out.add_assign(bv);
        self.push(out, Op::Add { a, b })
    }

    /// 2×2 average pooling, stride 2 (even sizes).
    pub fn avg_pool2(&mut self, x: Var) -> Var {
        let xin = &self.nodes[x.0].value;
        assert!(xin.h % 2 == 0 && xin.w % 2 == 0, "avg_pool2 needs even sizes");
        let (h, w) = (xin.h / 2, xin.w / 2);
        let mut out = Tensor::zeros(xin.c, h, w);
        let q = T::lit(0.25);
        for c in 0..xin.c {
            let src = xin.channel(c);
            let dst = out.channel_mut(c);
            for r in 0..h {
                for col in 0..w {
                    let i = 2 * r * xin.w + 2 * col;
                    dst[r * w + col] = q * (src[i] + src[i + 1] + src[i + xin.w] + src[i + xin.w + 1]);
                }
            }
        }
        self.push(out, Op::AvgPool2 { x })
    }

    /// Nearest-neighbour 2× upsampling.
    pub fn upsample2(&mut self, x: Var) -> Var {
        let xin = &self.nodes[x.0].value;
        let (h, w) = (xin.h * 2, xin.w * 2);
        let mut out = Tensor::zeros(xin.c, h, w);
        for c in 0..xin.c {
            let src = xin.channel(c);
            let dst = out.channel_mut(c);
            for r in 0..h {
                let srow = &src[(r / 2) * xin.w..(r / 2 + 1) * xin.w];
                for (col, d) in dst[r * w..(r + 1) * w].iter_mut().enumerate() {
                    *d = srow[col / 2];
                }
            }
        }
        self.push(out, Op::Upsample2 { x })
    }

    pub fn concat(&mut self, xs: &[Var]) -> Var {
        let parts: Vec<&Tensor<T>> = xs.iter().map(|v| &self.nodes[v.0].value).collect();
        let out = Tensor::concat(&parts);
        self.push(out, Op::Concat { xs: xs.to_vec() })
    }

    /// Per-channel multiplication by a trainable scale.
    pub fn channel_scale(&mut self, x: Var, scale: ParamId) -> Var {
        let mut out = self.nodes[x.0].value.clone();
        let s = self.params.get(scale);
        assert_eq!(s.len(), out.c, "channel_scale length");
        for (c, &sc) in s.iter().enumerate() {
            out.channel_mut(c).iter_mut().for_each(|v| *v *= sc);
        }
        self.push(out, Op::ChannelScale { x, scale })
    }

    pub fn global_avg(&mut self, x: Var) -> Var {
        let xin = &self.nodes[x.0].value;
        let inv = T::lit(1.0 / xin.plane() as f64);
        let out: Vec<T> = (0..xin.c)
            .map(|c| xin.channel(c).iter().copied().sum::<T>() * inv)
            .collect();
        self.push(Tensor::vector(out), Op::GlobalAvg { x })
    }

    /// `y_c = Σ_i weights_i · x_{c,i}` with constant spatial weights.
    pub fn weighted_pool(&mut self, x: Var, weights: Vec<T>) -> Var {
        let xin = &self.nodes[x.0].value;
        assert_eq!(weights.len(), xin.plane(), "weighted_pool weight size");
        let mut out = vec![T::zero(); xin.c];
        T::gemm(xin.c, xin.plane(), 1, &xin.data, false, &weights, false, &mut out, false);
        self.push(Tensor::vector(out), Op::WeightedPool { x, weights })
    }

    /// Back-propagate `seed` (the gradient of the objective w.r.t. `root`)
    /// and accumulate parameter gradients into `grads`.
    pub fn backward(&self, root: Var, seed: Tensor<T>, grads: &mut Grads<T>) {
        assert!(seed.same_shape(&self.nodes[root.0].value), "seed shape");
        let mut g: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        g[root.0] = Some(seed);
        for i in (0..=root.0).rev() {
            let Some(gy) = g[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Conv { x, conv, cols } => {
                    let xin = &self.nodes[x.0].value;
                    let n = gy.plane();
                    let kk = conv.cin * conv.kernel * conv.kernel;
                    {
                        let db = grads.get_mut(conv.bias);
                        for (co, d) in db.iter_mut().enumerate() {
                            *d += gy.channel(co).iter().copied().sum::<T>();
                        }
                    }
                    let src_cols: &[T] = if conv.is_pointwise() { &xin.data } else { cols };
                    gemm_nt_acc(conv.cout, kk, n, &gy.data, src_cols, grads.get_mut(conv.weight));
                    if needs_grad(&self.nodes, *x) {
                        let w = self.params.get(conv.weight);
                        let gx = accum(&mut g, *x, || Tensor::zeros(xin.c, xin.h, xin.w));
                        if conv.is_pointwise() {
                            T::gemm(kk, conv.cout, n, w, true, &gy.data, false, &mut gx.data, true);
                        } else {
                            let mut dcols = vec![T::zero(); kk * n];
                            T::gemm(kk, conv.cout, n, w, true, &gy.data, false, &mut dcols, false);
                            col2im(&dcols, xin.h, xin.w, conv, gy.h, gy.w, &mut gx.data);
                        }
                    }
                }
                Op::Linear { x, lin } => {
                    let xin = &self.nodes[x.0].value;
                    for (d, &v) in grads.get_mut(lin.bias).iter_mut().zip(&gy.data) {
                        *d += v;
                    }
                    T::gemm(lin.fan_out, 1, lin.fan_in, &gy.data, false, &xin.data, false, grads.get_mut(lin.weight), true);
                    if needs_grad(&self.nodes, *x) {
                        let w = self.params.get(lin.weight);
                        let gx = accum(&mut g, *x, || Tensor::zeros(xin.c, xin.h, xin.w));
                        T::gemm(lin.fan_in, lin.fan_out, 1, w, true, &gy.data, false, &mut gx.data, true);
                    }
                }
                Op::Relu { x } => {
                    if needs_grad(&self.nodes, *x) {
                        let y = &node.value;
                        let gx = accum(&mut g, *x, || Tensor::zeros(y.c, y.h, y.w));
                        for ((d, &gv), &yv) in gx.data.iter_mut().zip(&gy.data).zip(&y.data) {
                            if yv > T::zero() {
                                *d += gv;
                            }
                        }
                    }
                }
                Op::Add { a, b } => {
                    for v in [*a, *b] {
                        if needs_grad(&self.nodes, v) {
                            let gx = accum(&mut g, v, || Tensor::zeros(gy.c, gy.h, gy.w));
                            gx.add_assign(&gy);
                        }
                    }
                }
                Op::AvgPool2 { x } => {
                    if needs_grad(&self.nodes, *x) {
                        let xin = &self.nodes[x.0].value;
                        let gx = accum(&mut g, *x, || Tensor::zeros(xin.c, xin.h, xin.w));
                        let q = T::lit(0.25);
                        let xw = xin.w;
                        for c in 0..gy.c {
                            let src = gy.channel(c);
                            let dst = gx.channel_mut(c);
                            for r in 0..gy.h {
                                for col in 0..gy.w {
                                    let v = q * src[r * gy.w + col];
                                    let i = 2 * r * xw + 2 * col;
                                    dst[i] += v;
                                    dst[i + 1] += v;
                                    dst[i + xw] += v;
                                    dst[i + xw + 1] += v;
                                }
                            }
                        }
                    }
                }
                Op::Upsample2 { x } => {
                    if needs_grad(&self.nodes, *x) {
                        let xin = &self.nodes[x.0].value;
                        let gx = accum(&mut g, *x, || Tensor::zeros(xin.c, xin.h, xin.w));
                        for c in 0..gy.c {
                            let src = gy.channel(c);
                            let dst = gx.channel_mut(c);
                            for r in 0..gy.h {
                                for col in 0..gy.w {
                                    dst[(r / 2) * xin.w + col / 2] += src[r * gy.w + col];
                                }
                            }
                        }
                    }
                }
                Op::Concat { xs } => {
                    let mut off = 0;
                    for &v in xs {
                        let part = &self.nodes[v.0].value;
                        let len = part.len();
                        if needs_grad(&self.nodes, v) {
                            let gx = accum(&mut g, v, || Tensor::zeros(part.c, part.h, part.w));
                            for (d, &s) in gx.data.iter_mut().zip(&gy.data[off..off + len]) {
                                *d += s;
                            }
                        }
                        off += len;
                    }
                }
                Op::ChannelScale { x, scale } => {
                    let xin = &self.nodes[x.0].value;
                    {
                        let ds = grads.get_mut(*scale);
                        for (c, d) in ds.iter_mut().enumerate() {
                            *d += gy
                                .channel(c)
                                .iter()
                                .zip(xin.channel(c))
                                .map(|(&a, &b)| a * b)
                                .sum::<T>();
                        }
                    }
                    if needs_grad(&self.nodes, *x) {
                        let s = self.params.get(*scale);
                        let gx = accum(&mut g, *x, || Tensor::zeros(xin.c, xin.h, xin.w));
                        for (c, &sc) in s.iter().enumerate() {
                            for (d, &v) in gx.channel_mut(c).iter_mut().zip(gy.channel(c)) {
                                *d += sc * v;
                            }
                        }
                    }
                }
                Op::GlobalAvg { x } => {
                    if needs_grad(&self.nodes, *x) {
                        let xin = &self.nodes[x.0].value;
                        let inv = T::lit(1.0 / xin.plane() as f64);
                        let gx = accum(&mut g, *x, || Tensor::zeros(xin.c, xin.h, xin.w));
                        for c in 0..xin.c {
                            let v = gy.data[c] * inv;
                            gx.channel_mut(c).iter_mut().for_each(|d| *d += v);
                        }
                    }
                }
                Op::WeightedPool { x, weights } => {
                    if needs_grad(&self.nodes, *x) {
                        let xin = &self.nodes[x.0].value;
                        let gx = accum(&mut g, *x, || Tensor::zeros(xin.c, xin.h, xin.w));
                        T::gemm(xin.c, 1, xin.plane(), &gy.data, false, weights, false, &mut gx.data, true);
                    }
                }
            }
        }
    }
}

fn needs_grad<T>(nodes: &[Node<T>], v: Var) -> bool {
    !matches!(nodes[v.0].op, Op::Input)
}

fn accum<T: Scalar>(
    g: &mut [Option<Tensor<T>>],
    v: Var,
    init: impl FnOnce() -> Tensor<T>,
) -> &mut Tensor<T> {
    g[v.0].get_or_insert_with(init)
}
