//! Resolution changes: 2×2 max pooling with argmax capture, index-driven unpooling,
//! and corner-aligned bilinear 2× upsampling.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Argmax positions recorded by [`maxpool2x2`], one per pooled cell, as flat
/// offsets into the pooled input tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndices {
    pub input_shape: Shape,
    pub output_shape: Shape,
    pub positions: Vec<usize>,
}

pub fn pooled_shape(input: Shape) -> Result<Shape> {
    if input.h % 2 != 0 || input.w % 2 != 0 {
        return Err(Error::config(format!(
            "2x2 max pooling needs even spatial dims, got {}x{}",
            input.h, input.w
        )));
    }
    Ok(input.with_hw(input.h / 2, input.w / 2))
}

/// 2×2/stride-2 max pooling. Ties go to the lowest flat input index.
pub fn maxpool2x2<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
    let is = input.shape();
    let os = pooled_shape(is)?;
    let src = input.data();
    let mut out = Vec::with_capacity(os.numel());
    let mut positions = Vec::with_capacity(os.numel());
    for plane in 0..is.n * is.c {
        let base = plane * is.plane();
        for oy in 0..os.h {
            for ox in 0..os.w {
                let top = base + 2 * oy * is.w + 2 * ox;
                // window visited in increasing flat order; strict `>` keeps the first max
                let mut best = top;
                for cand in [top + 1, top + is.w, top + is.w + 1] {
                    if src[cand] > src[best] {
                        best = cand;
                    }
                }
                out.push(src[best]);
                positions.push(best);
            }
        }
    }
    Ok((
        Tensor::from_vec(os, out)?,
        PoolIndices {
            input_shape: is,
            output_shape: os,
            positions,
        },
    ))
}

pub fn maxpool2x2_backward<T: Scalar>(indices: &PoolIndices, grad_out: &Tensor<T>) -> Tensor<T> {
    let mut g = Tensor::zeros(indices.input_shape);
    let dst = g.data_mut();
    for (&p, &v) in indices.positions.iter().zip(grad_out.data()) {
        dst[p] = dst[p] + v;
    }
    g
}

/// Writes each input value to its recorded argmax position; every other cell is zero.
pub fn maxunpool2x2<T: Scalar>(input: &Tensor<T>, indices: &PoolIndices) -> Result<Tensor<T>> {
    if input.shape() != indices.output_shape {
        return Err(Error::config(format!(
            "unpool input {} does not match pooled shape {}",
            input.shape(),
            indices.output_shape
        )));
    }
    let mut out = Tensor::zeros(indices.input_shape);
    let limit = out.numel();
    let dst = out.data_mut();
    for (&p, &v) in indices.positions.iter().zip(input.data()) {
        if p >= limit {
            return Err(Error::Internal(format!(
                "unpool index {p} outside tensor of {limit} elements"
            )));
        }
        dst[p] = v;
    }
    Ok(out)
}

pub fn maxunpool2x2_backward<T: Scalar>(indices: &PoolIndices, grad_out: &Tensor<T>) -> Tensor<T> {
    let g = grad_out.data();
    let data = indices.positions.iter().map(|&p| g[p]).collect();
    Tensor::from_vec(indices.output_shape, data).expect("pooled shape matches index count")
}

/// Source taps for one output coordinate: `(lo, hi, frac)` with value
/// `(1 - frac)·src[lo] + frac·src[hi]`.
fn taps(out_len: usize, in_len: usize) -> Vec<(usize, usize, f64)> {
    (0..out_len)
        .map(|o| {
            if in_len == 1 || out_len == 1 {
                return (0, 0, 0.0);
            }
            // corner-aligned: output 0 ↦ input 0, output last ↦ input last
            let pos = o as f64 * (in_len - 1) as f64 / (out_len - 1) as f64;
            let lo = (pos.floor() as usize).min(in_len - 1);
            let hi = (lo + 1).min(in_len - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

pub fn upsample_bilinear2x<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let is = input.shape();
    let os = is.with_hw(is.h * 2, is.w * 2);
    let ty = taps(os.h, is.h);
    let tx = taps(os.w, is.w);
    let mut out = Tensor::zeros(os);
    let src = input.data();
    let dst = out.data_mut();
    for plane in 0..is.n * is.c {
        let sb = plane * is.plane();
        let db = plane * os.plane();
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            let fy = T::from_f64_lossy(fy);
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let fx = T::from_f64_lossy(fx);
                let top = src[sb + y0 * is.w + x0] * (T::one() - fx) + src[sb + y0 * is.w + x1] * fx;
                let bot = src[sb + y1 * is.w + x0] * (T::one() - fx) + src[sb + y1 * is.w + x1] * fx;
                dst[db + oy * os.w + ox] = top * (T::one() - fy) + bot * fy;
            }
        }
    }
    out
}

pub fn upsample_bilinear2x_backward<T: Scalar>(input_shape: Shape, grad_out: &Tensor<T>) -> Tensor<T> {
    let is = input_shape;
    let os = grad_out.shape();
    let ty = taps(os.h, is.h);
    let tx = taps(os.w, is.w);
    let mut g = Tensor::zeros(is);
    let go = grad_out.data();
    let dst = g.data_mut();
    for plane in 0..is.n * is.c {
        let sb = plane * is.plane();
        let db = plane * os.plane();
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            let fy = T::from_f64_lossy(fy);
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let fx = T::from_f64_lossy(fx);
                let v = go[db + oy * os.w + ox];
                let top = v * (T::one() - fy);
                let bot = v * fy;
                let i00 = sb + y0 * is.w + x0;
                let i01 = sb + y0 * is.w + x1;
                let i10 = sb + y1 * is.w + x0;
                let i11 = sb + y1 * is.w + x1;
                dst[i00] = dst[i00] + top * (T::one() - fx);
                dst[i01] = dst[i01] + top * fx;
                dst[i10] = dst[i10] + bot * (T::one() - fx);
                dst[i11] = dst[i11] + bot * fx;
            }
        }
    }
    g
}
