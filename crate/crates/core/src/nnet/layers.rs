//! Layer primitives with exact analytic backward passes.

use crate::error::{Error, Result};
use crate::real::Real;

use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvSpec {
    pub fn same3x3(in_c: usize, out_c: usize) -> Self {
        ConvSpec {
            in_c,
            out_c,
            kernel: 3,
            stride: 1,
            pad: 1,
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    /// Columns of the unrolled input (`in_c * k * k`).
    pub fn patch(&self) -> usize {
        self.in_c * self.kernel * self.kernel
    }

    pub fn weight_len(&self) -> usize {
        self.out_c * self.patch()
    }
}

/// Unrolls `x` into a `(in_c*k*k) × (oh*ow)` matrix.
pub fn im2col<T: Real>(x: &Tensor<T>, spec: &ConvSpec, col: &mut Vec<T>) {
    let (oh, ow) = spec.out_hw(x.h, x.w);
    let k = spec.kernel;
    let n = oh * ow;
    col.clear();
    col.resize(spec.patch() * n, T::zero());
    for ci in 0..x.c {
        let src = &x.data[ci * x.plane()..(ci + 1) * x.plane()];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * n..][..n];
                for oy in 0..oh {
                    let iy = (oy * spec.stride + ky) as isize - spec.pad as isize;
                    if iy < 0 || iy >= x.h as isize {
                        continue;
                    }
                    let src_row = &src[iy as usize * x.w..][..x.w];
                    let dst = &mut row[oy * ow..][..ow];
                    if spec.stride == 1 {
                        // Valid ox range: 0 <= ox + kx - pad < w.
                        let lo = spec.pad.saturating_sub(kx);
                        let hi = (x.w + spec.pad).saturating_sub(kx).min(ow);
                        if lo < hi {
                            let s0 = lo + kx - spec.pad;
                            dst[lo..hi].copy_from_slice(&src_row[s0..s0 + (hi - lo)]);
                        }
                    } else {
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * spec.stride + kx) as isize - spec.pad as isize;
                            if ix >= 0 && ix < x.w as isize {
                                *d = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Scatters a column-gradient matrix back onto an input-shaped tensor.
pub fn col2im<T: Real>(dcol: &[T], spec: &ConvSpec, h: usize, w: usize) -> Tensor<T> {
    let (oh, ow) = spec.out_hw(h, w);
    let k = spec.kernel;
    let n = oh * ow;
    let mut dx = Tensor::zeros(spec.in_c, h, w);
    for ci in 0..spec.in_c {
        let dst = &mut dx.data[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &dcol[((ci * k + ky) * k + kx) * n..][..n];
                for oy in 0..oh {
                    let iy = (oy * spec.stride + ky) as isize - spec.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &row[oy * ow..][..ow];
                    let dst_row = &mut dst[iy as usize * w..][..w];
                    if spec.stride == 1 {
                        let lo = spec.pad.saturating_sub(kx);
                        let hi = (w + spec.pad).saturating_sub(kx).min(ow);
                        if lo < hi {
                            let d0 = lo + kx - spec.pad;
                            for (d, s) in dst_row[d0..d0 + (hi - lo)].iter_mut().zip(&src[lo..hi]) {
                                *d += *s;
                            }
                        }
                    } else {
                        for (ox, s) in src.iter().enumerate() {
                            let ix = (ox * spec.stride + kx) as isize - spec.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst_row[ix as usize] += *s;
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Convolution as `W (out_c × patch) · col (patch × oh·ow) + b`. `col` receives
/// the unrolled input for the backward pass.
pub fn conv2d_forward<T: Real>(x: &Tensor<T>, weight: &[T], bias: &[T], spec: &ConvSpec, col: &mut Vec<T>) -> Result<Tensor<T>> {
    if x.c != spec.in_c || weight.len() != spec.weight_len() || bias.len() != spec.out_c {
        return Err(Error::Shape(format!(
            "conv expects input ({}, h, w), weight {}, bias {}; got input {:?}, weight {}, bias {}",
            spec.in_c,
            spec.weight_len(),
            spec.out_c,
            x.shape(),
            weight.len(),
            bias.len()
        )));
    }
    if x.h + 2 * spec.pad < spec.kernel || x.w + 2 * spec.pad < spec.kernel {
        return Err(Error::Shape(format!("input {:?} smaller than kernel {}", x.shape(), spec.kernel)));
    }
    im2col(x, spec, col);
    let (oh, ow) = spec.out_hw(x.h, x.w);
    let n = oh * ow;
    let p = spec.patch();
    let mut y = Tensor::zeros(spec.out_c, oh, ow);
    for (o, &b) in bias.iter().enumerate() {
        y.data[o * n..(o + 1) * n].iter_mut().for_each(|v| *v = b);
    }
    T::gemm(spec.out_c, p, n, T::one(), weight, p as isize, 1, col, n as isize, 1, T::one(), &mut y.data, n as isize, 1);
    Ok(y)
}

/// Accumulates weight/bias gradients and returns the input gradient when `need_dx`.
pub fn conv2d_backward<T: Real>(
    in_hw: (usize, usize),
    col: &[T],
    dy: &Tensor<T>,
    weight: &[T],
    spec: &ConvSpec,
    dweight: &mut [T],
    dbias: &mut [T],
    need_dx: bool,
) -> Option<Tensor<T>> {
    let n = dy.plane();
    let p = spec.patch();
    for (o, db) in dbias.iter_mut().enumerate() {
        *db += dy.data[o * n..(o + 1) * n].iter().copied().sum::<T>();
    }
    // dW += dY · colᵀ with colᵀ materialised; GEMM packing is much faster when
    // neither operand is strided along the long `n` axis.
    let mut col_t = vec![T::zero(); n * p];
    const BLOCK: usize = 32;
    for j0 in (0..p).step_by(BLOCK) {
        for i0 in (0..n).step_by(BLOCK) {
            for j in j0..(j0 + BLOCK).min(p) {
                for i in i0..(i0 + BLOCK).min(n) {
                    col_t[i * p + j] = col[j * n + i];
                }
            }
        }
    }
    T::gemm(spec.out_c, n, p, T::one(), &dy.data, n as isize, 1, &col_t, p as isize, 1, T::one(), dweight, p as isize, 1);
    if !need_dx {
        return None;
    }
    // dcol = Wᵀ · dY
    let mut dcol = vec![T::zero(); p * n];
    T::gemm(p, spec.out_c, n, T::one(), weight, 1, p as isize, &dy.data, n as isize, 1, T::zero(), &mut dcol, n as isize, 1);
    Some(col2im(&dcol, spec, in_hw.0, in_hw.1))
}

/// 2×2 max pooling with stride 2 (trailing odd row/column dropped).
/// Returns the output and the flat input index of each maximum.
pub fn maxpool2x2_forward<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    if x.h < 2 || x.w < 2 {
        return Err(Error::Shape(format!("max pool needs at least 2x2 input, got {:?}", x.shape())));
    }
    let (oh, ow) = (x.h / 2, x.w / 2);
    let mut y = Tensor::zeros(x.c, oh, ow);
    let mut arg = vec![0u32; x.c * oh * ow];
    for c in 0..x.c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = (c * x.h + 2 * oy) * x.w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = (c * x.h + 2 * oy + dy) * x.w + 2 * ox + dx;
                    if x.data[i] > x.data[best] {
                        best = i;
                    }
                }
                let o = (c * oh + oy) * ow + ox;
                y.data[o] = x.data[best];
                arg[o] = best as u32;
            }
        }
    }
    Ok((y, arg))
}

pub fn maxpool2x2_backward<T: Real>(dy: &Tensor<T>, argmax: &[u32], in_shape: (usize, usize, usize)) -> Tensor<T> {
    let mut dx = Tensor::zeros(in_shape.0, in_shape.1, in_shape.2);
    for (g, &i) in dy.data.iter().zip(argmax) {
        dx.data[i as usize] += *g;
    }
    dx
}

#[inline]
pub fn elu<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp_m1()
    }
}

/// Derivative of ELU expressed through its output: 1 for x > 0, else `y + 1 = e^x`.
#[inline]
pub fn elu_grad_from_output<T: Real>(y: T) -> T {
    if y > T::zero() {
        T::one()
    } else {
        y + T::one()
    }
}

pub fn elu_forward<T: Real>(x: &mut [T]) {
    x.iter_mut().for_each(|v| *v = elu(*v));
}

/// `dy ← dy · elu'(x)` given the ELU outputs.
pub fn elu_backward<T: Real>(y: &[T], dy: &mut [T]) {
    for (g, &o) in dy.iter_mut().zip(y) {
        *g *= elu_grad_from_output(o);
    }
}

/// `y = W x + b` with `W` stored `(out × in)` row-major.
pub fn linear_forward<T: Real>(x: &[T], weight: &[T], bias: &[T]) -> Result<Vec<T>> {
    let (n_in, n_out) = (x.len(), bias.len());
    if weight.len() != n_in * n_out {
        return Err(Error::Shape(format!("linear weight {} for {n_in} -> {n_out}", weight.len())));
    }
    let mut y = bias.to_vec();
    T::gemm(n_out, n_in, 1, T::one(), weight, n_in as isize, 1, x, 1, 1, T::one(), &mut y, 1, 1);
    Ok(y)
}

/// Accumulates parameter gradients and returns `dx`.
pub fn linear_backward<T: Real>(x: &[T], dy: &[T], weight: &[T], dweight: &mut [T], dbias: &mut [T]) -> Vec<T> {
    let n_in = x.len();
    for (db, g) in dbias.iter_mut().zip(dy) {
        *db += *g;
    }
    T::gemm(dy.len(), 1, n_in, T::one(), dy, 1, 1, x, 1, 1, T::one(), dweight, n_in as isize, 1);
    let mut dx = vec![T::zero(); n_in];
    T::gemm(n_in, dy.len(), 1, T::one(), weight, 1, n_in as isize, dy, 1, 1, T::zero(), &mut dx, 1, 1);
    dx
}

fn cells(len: usize, g: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..g).map(move |i| (i * len / g, ((i + 1) * len / g).max(i * len / g + 1)))
}

/// Average-pools each channel onto a `g × g` grid; `g = 1` is global average pooling.
pub fn grid_pool_forward<T: Real>(x: &Tensor<T>, g: usize) -> Result<Vec<T>> {
    if g == 0 || x.h < g || x.w < g {
        return Err(Error::Shape(format!("cannot pool {:?} onto a {g}x{g} grid", x.shape())));
    }
    let mut out = Vec::with_capacity(x.c * g * g);
    for c in 0..x.c {
        for (y0, y1) in cells(x.h, g) {
            for (x0, x1) in cells(x.w, g) {
                let mut acc = T::zero();
                for y in y0..y1 {
                    for xx in x0..x1 {
                        acc += x.at(c, y, xx);
                    }
                }
                out.push(acc / T::lit(((y1 - y0) * (x1 - x0)) as f64));
            }
        }
    }
    Ok(out)
}

pub fn grid_pool_backward<T: Real>(dy: &[T], shape: (usize, usize, usize), g: usize) -> Tensor<T> {
    let (c_n, h, w) = shape;
    let mut dx = Tensor::zeros(c_n, h, w);
    let mut k = 0;
    for c in 0..c_n {
        for (y0, y1) in cells(h, g) {
            for (x0, x1) in cells(w, g) {
                let share = dy[k] / T::lit(((y1 - y0) * (x1 - x0)) as f64);
                for y in y0..y1 {
                    for xx in x0..x1 {
                        dx.data[(c * h + y) * w + xx] += share;
                    }
                }
                k += 1;
            }
        }
    }
    dx
}

/// Numerically stable softmax.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = logits.iter().map(|&l| (l - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&l| (l - m).exp()).sum::<T>().ln() + m;
    logits.iter().map(|&l| l - lse).collect()
}
