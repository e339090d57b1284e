//! 2-D cross-correlation via im2col + GEMM.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Static description of one convolution layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: (usize, usize),
    pub padding: (usize, usize),
    pub stride: usize,
    pub has_bias: bool,
}

impl ConvSpec {
    /// `k × k` kernel, "same" zero padding, stride 1, with bias.
    pub fn same(in_ch: usize, out_ch: usize, k: usize) -> Self {
        ConvSpec {
            in_ch,
            out_ch,
            kernel: (k, k),
            padding: (k / 2, k / 2),
            stride: 1,
            has_bias: true,
        }
    }

    pub fn without_bias(self) -> Self {
        ConvSpec {
            has_bias: false,
            ..self
        }
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(self.out_ch, self.in_ch, self.kernel.0, self.kernel.1)
    }

    pub fn bias_shape(&self) -> Shape {
        Shape::new(1, self.out_ch, 1, 1)
    }

    pub fn param_count(&self) -> usize {
        self.weight_shape().numel() + if self.has_bias { self.out_ch } else { 0 }
    }

    /// Output spatial dims for an `h × w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.stride == 0 {
            return Err(Error::config("conv stride must be >= 1"));
        }
        let axis = |len: usize, k: usize, p: usize| -> Result<usize> {
            let padded = len + 2 * p;
            if padded < k {
                return Err(Error::config(format!(
                    "kernel {k} larger than padded extent {padded}"
                )));
            }
            if (padded - k) % self.stride != 0 {
                return Err(Error::config(format!(
                    "non-integer conv output: ({len} + 2*{p} - {k}) / {}",
                    self.stride
                )));
            }
            Ok((padded - k) / self.stride + 1)
        };
        Ok((
            axis(h, self.kernel.0, self.padding.0)?,
            axis(w, self.kernel.1, self.padding.1)?,
        ))
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        if input.c != self.in_ch {
            return Err(Error::config(format!(
                "conv expects {} input channels, got {}",
                self.in_ch, input.c
            )));
        }
        let (oh, ow) = self.output_hw(input.h, input.w)?;
        Ok(Shape::new(input.n, self.out_ch, oh, ow))
    }

    /// Multiply-accumulates for one sample of `input` spatial size.
    pub fn macs(&self, h: usize, w: usize) -> Result<u64> {
        let (oh, ow) = self.output_hw(h, w)?;
        Ok((self.out_ch * oh * ow) as u64 * (self.in_ch * self.kernel.0 * self.kernel.1) as u64)
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == (1, 1) && self.padding == (0, 0) && self.stride == 1
    }

    fn check(&self, input: Shape, weight: Shape, bias: Option<usize>) -> Result<Shape> {
        if weight != self.weight_shape() {
            return Err(Error::config(format!(
                "conv weight {weight} does not match spec {}",
                self.weight_shape()
            )));
        }
        match (self.has_bias, bias) {
            (true, Some(len)) if len == self.out_ch => {}
            (false, None) => {}
            (true, Some(len)) => {
                return Err(Error::config(format!(
                    "conv bias has {len} entries, expected {}",
                    self.out_ch
                )))
            }
            (true, None) => return Err(Error::config("conv spec requires a bias")),
            (false, Some(_)) => return Err(Error::config("conv spec has no bias")),
        }
        self.output_shape(input)
    }
}

/// Unfolds one sample (`c × h × w`) into a `(c·kh·kw) × (oh·ow)` patch matrix.
fn im2col<T: Scalar>(src: &[T], spec: &ConvSpec, h: usize, w: usize, oh: usize, ow: usize, col: &mut [T]) {
    let (kh, kw) = spec.kernel;
    let (ph, pw) = spec.padding;
    let s = spec.stride;
    let cols = oh * ow;
    for ci in 0..spec.in_ch {
        let plane = &src[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..oh {
                    let out_row = &mut dst[oy * ow..(oy + 1) * ow];
                    let iy = (oy * s + ky) as isize - ph as isize;
                    if iy < 0 || iy >= h as isize {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, o) in out_row.iter_mut().enumerate() {
                        let ix = (ox * s + kx) as isize - pw as isize;
                        *o = if ix < 0 || ix >= w as isize {
                            T::zero()
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the image (additively).
fn col2im<T: Scalar>(col: &[T], spec: &ConvSpec, h: usize, w: usize, oh: usize, ow: usize, dst: &mut [T]) {
    let (kh, kw) = spec.kernel;
    let (ph, pw) = spec.padding;
    let s = spec.stride;
    let cols = oh * ow;
    for ci in 0..spec.in_ch {
        let plane = &mut dst[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                let src = &col[row * cols..(row + 1) * cols];
                for oy in 0..oh {
                    let iy = (oy * s + ky) as isize - ph as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * s + kx) as isize - pw as isize;
                        if ix >= 0 && ix < w as isize {
                            dst_row[ix as usize] = dst_row[ix as usize] + src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&[T]>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    let is = input.shape();
    let os = spec.check(is, weight.shape(), bias.map(<[T]>::len))?;
    let k = spec.in_ch * spec.kernel.0 * spec.kernel.1;
    let cols = os.h * os.w;
    let mut out = Tensor::zeros(os);
    let mut col = if spec.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); k * cols]
    };
    for n in 0..is.n {
        let patches: &[T] = if spec.is_pointwise() {
            input.sample(n)
        } else {
            im2col(input.sample(n), spec, is.h, is.w, os.h, os.w, &mut col);
            &col
        };
        let dst = out.sample_mut(n);
        T::gemm(spec.out_ch, k, cols, weight.data(), false, patches, false, dst, false);
        if let Some(b) = bias {
            for (co, &bv) in b.iter().enumerate() {
                for v in &mut dst[co * cols..(co + 1) * cols] {
                    *v = *v + bv;
                }
            }
        }
    }
    Ok(out)
}

pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Option<Vec<T>>,
}

/// Gradients of [`conv2d`] given the upstream gradient `grad_out`.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    spec: &ConvSpec,
    grad_out: &Tensor<T>,
    need_input: bool,
) -> ConvGrads<T> {
    let is = input.shape();
    let os = grad_out.shape();
    let k = spec.in_ch * spec.kernel.0 * spec.kernel.1;
    let cols = os.h * os.w;
    let mut grad_w = Tensor::zeros(weight.shape());
    let mut grad_b = spec.has_bias.then(|| vec![T::zero(); spec.out_ch]);
    let mut grad_in = need_input.then(|| Tensor::zeros(is));
    let pointwise = spec.is_pointwise();
    let mut col = vec![T::zero(); if pointwise { 0 } else { k * cols }];
    let mut dcol = vec![T::zero(); if need_input && !pointwise { k * cols } else { 0 }];
    let mut partial = vec![T::zero(); weight.numel()];
    for n in 0..is.n {
        let g = grad_out.sample(n);
        let patches: &[T] = if pointwise {
            input.sample(n)
        } else {
            im2col(input.sample(n), spec, is.h, is.w, os.h, os.w, &mut col);
            &col
        };
        // dW_n = g · patchesᵀ, summed over samples in batch order.
        T::gemm(spec.out_ch, cols, k, g, false, patches, true, &mut partial, false);
        for (a, &b) in grad_w.data_mut().iter_mut().zip(&partial) {
            *a = *a + b;
        }
        if let Some(gb) = grad_b.as_mut() {
            for (co, acc) in gb.iter_mut().enumerate() {
                *acc = g[co * cols..(co + 1) * cols]
                    .iter()
                    .fold(*acc, |s, &v| s + v);
            }
        }
        if let Some(gi) = grad_in.as_mut() {
            if pointwise {
                T::gemm(k, spec.out_ch, cols, weight.data(), true, g, false, gi.sample_mut(n), false);
            } else {
                T::gemm(k, spec.out_ch, cols, weight.data(), true, g, false, &mut dcol, false);
                col2im(&dcol, spec, is.h, is.w, os.h, os.w, gi.sample_mut(n));
            }
        }
    }
    ConvGrads {
        input: grad_in,
        weight: grad_w,
        bias: grad_b,
    }
}
