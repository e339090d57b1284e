//! Slice-by-slice spatial message passing.
//!
//! A feature map is cut into rows (down/up) or columns (right/left). Walking the
//! slices in pass order, each slice receives `relu(conv1d(previous updated slice))`
//! as a residual; the first slice is passed through unchanged. One kernel is shared
//! by every slice of a direction.

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Down,
    Up,
    Right,
    Left,
}

impl Direction {
    /// Application order inside one block.
    pub const ORDER: [Direction; 4] = [Direction::Down, Direction::Up, Direction::Right, Direction::Left];

    /// Down/up passes slice the map into rows; right/left into columns.
    pub fn slices_rows(self) -> bool {
        matches!(self, Direction::Down | Direction::Up)
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Down => "down",
            Direction::Up => "up",
            Direction::Right => "right",
            Direction::Left => "left",
        }
    }

    /// `[C, C, 1, k]` for row slices, `[C, C, k, 1]` for column slices.
    pub fn weight_shape(self, channels: usize, k: usize) -> Shape {
        if self.slices_rows() {
            Shape::new(channels, channels, 1, k)
        } else {
            Shape::new(channels, channels, k, 1)
        }
    }

    /// Slice indices in visiting order.
    fn order(self, count: usize) -> Vec<usize> {
        match self {
            Direction::Down | Direction::Right => (0..count).collect(),
            Direction::Up | Direction::Left => (0..count).rev().collect(),
        }
    }
}

/// Geometry of one sample seen as `count` slices of `channels × len`.
#[derive(Clone, Copy)]
struct Slicing {
    rows: bool,
    channels: usize,
    h: usize,
    w: usize,
}

impl Slicing {
    fn new(shape: Shape, dir: Direction) -> Self {
        Slicing {
            rows: dir.slices_rows(),
            channels: shape.c,
            h: shape.h,
            w: shape.w,
        }
    }

    fn count(&self) -> usize {
        if self.rows {
            self.h
        } else {
            self.w
        }
    }

    fn len(&self) -> usize {
        if self.rows {
            self.w
        } else {
            self.h
        }
    }

    #[inline]
    fn offset(&self, c: usize, slice: usize, l: usize) -> usize {
        if self.rows {
            (c * self.h + slice) * self.w + l
        } else {
            (c * self.h + l) * self.w + slice
        }
    }

    fn gather<T: Scalar>(&self, src: &[T], slice: usize, dst: &mut [T]) {
        let len = self.len();
        for c in 0..self.channels {
            for l in 0..len {
                dst[c * len + l] = src[self.offset(c, slice, l)];
            }
        }
    }
}

/// `[C·k, L]` patch matrix of a `[C, L]` slice, zero padded by `k/2` on both ends.
fn unfold<T: Scalar>(slice: &[T], channels: usize, len: usize, k: usize, col: &mut [T]) {
    let pad = k / 2;
    for ci in 0..channels {
        for kk in 0..k {
            let row = &mut col[(ci * k + kk) * len..(ci * k + kk + 1) * len];
            for (l, v) in row.iter_mut().enumerate() {
                let src = l as isize + kk as isize - pad as isize;
                *v = if src < 0 || src >= len as isize {
                    T::zero()
                } else {
                    slice[ci * len + src as usize]
                };
            }
        }
    }
}

fn fold<T: Scalar>(col: &[T], channels: usize, len: usize, k: usize, dst: &mut [T]) {
    let pad = k / 2;
    dst.iter_mut().for_each(|v| *v = T::zero());
    for ci in 0..channels {
        for kk in 0..k {
            let row = &col[(ci * k + kk) * len..(ci * k + kk + 1) * len];
            for (l, &v) in row.iter().enumerate() {
                let src = l as isize + kk as isize - pad as isize;
                if src >= 0 && src < len as isize {
                    let i = ci * len + src as usize;
                    dst[i] = dst[i] + v;
                }
            }
        }
    }
}

fn check<T: Scalar>(input: Shape, weight: &Tensor<T>, bias: &Tensor<T>, dir: Direction) -> Result<usize> {
    let ws = weight.shape();
    let k = if dir.slices_rows() { ws.w } else { ws.h };
    if k % 2 == 0 {
        return Err(Error::config(format!("SCNN kernel extent must be odd, got {k}")));
    }
    if ws != dir.weight_shape(input.c, k) {
        return Err(Error::config(format!(
            "SCNN {} weight {ws} does not fit {} channels (expected {})",
            dir.name(),
            input.c,
            dir.weight_shape(input.c, k)
        )));
    }
    if bias.numel() != input.c {
        return Err(Error::config(format!(
            "SCNN bias has {} entries for {} channels",
            bias.numel(),
            input.c
        )));
    }
    Ok(k)
}

/// One directional pass. Returns the output and the pre-activation messages
/// (needed by the backward rule; the first slice's entries are zero).
pub fn pass_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    dir: Direction,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let shape = input.shape();
    let k = check(shape, weight, bias, dir)?;
    let sl = Slicing::new(shape, dir);
    let (c, len) = (shape.c, sl.len());
    let order = dir.order(sl.count());
    let mut out = input.clone();
    let mut pre = Tensor::zeros(shape);
    let mut prev = vec![T::zero(); c * len];
    let mut col = vec![T::zero(); c * k * len];
    let mut msg = vec![T::zero(); c * len];
    let b = bias.data();
    for n in 0..shape.n {
        for pair in order.windows(2) {
            let (from, to) = (pair[0], pair[1]);
            sl.gather(out.sample(n), from, &mut prev);
            unfold(&prev, c, len, k, &mut col);
            T::gemm(c, c * k, len, weight.data(), false, &col, false, &mut msg, false);
            let dst = out.sample_mut(n);
            for ch in 0..c {
                for l in 0..len {
                    let off = sl.offset(ch, to, l);
                    let p = msg[ch * len + l] + b[ch];
                    dst[off] = dst[off] + p.max(T::zero());
                    msg[ch * len + l] = p;
                }
            }
            let pdst = pre.sample_mut(n);
            for ch in 0..c {
                for l in 0..len {
                    pdst[sl.offset(ch, to, l)] = msg[ch * len + l];
                }
            }
        }
    }
    Ok((out, pre))
}

pub struct ScnnGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn pass_backward<T: Scalar>(
    out: &Tensor<T>,
    pre: &Tensor<T>,
    weight: &Tensor<T>,
    dir: Direction,
    grad_out: &Tensor<T>,
) -> ScnnGrads<T> {
    let shape = out.shape();
    let sl = Slicing::new(shape, dir);
    let (c, len) = (shape.c, sl.len());
    let k = weight.numel() / (c * c);
    let order = dir.order(sl.count());
    let mut g = grad_out.clone();
    let mut gw = Tensor::zeros(weight.shape());
    let mut gb = Tensor::zeros(Shape::new(1, c, 1, 1));
    let mut gcur = vec![T::zero(); c * len];
    let mut pcur = vec![T::zero(); c * len];
    let mut prev = vec![T::zero(); c * len];
    let mut col = vec![T::zero(); c * k * len];
    let mut dcol = vec![T::zero(); c * k * len];
    let mut dprev = vec![T::zero(); c * len];
    let mut partial = vec![T::zero(); weight.numel()];
    for n in 0..shape.n {
        for pair in order.windows(2).rev() {
            let (from, to) = (pair[0], pair[1]);
            sl.gather(g.sample(n), to, &mut gcur);
            sl.gather(pre.sample(n), to, &mut pcur);
            for (d, &p) in gcur.iter_mut().zip(&pcur) {
                if p <= T::zero() {
                    *d = T::zero();
                }
            }
            sl.gather(out.sample(n), from, &mut prev);
            unfold(&prev, c, len, k, &mut col);
            T::gemm(c, len, c * k, &gcur, false, &col, true, &mut partial, false);
            for (a, &v) in gw.data_mut().iter_mut().zip(&partial) {
                *a = *a + v;
            }
            for ch in 0..c {
                let s = gcur[ch * len..(ch + 1) * len].iter().fold(T::zero(), |acc, &v| acc + v);
                gb.data_mut()[ch] = gb.data()[ch] + s;
            }
            T::gemm(c * k, c, len, weight.data(), true, &gcur, false, &mut dcol, false);
            fold(&dcol, c, len, k, &mut dprev);
            let dst = g.sample_mut(n);
            for ch in 0..c {
                for l in 0..len {
                    let off = sl.offset(ch, from, l);
                    dst[off] = dst[off] + dprev[ch * len + l];
                }
            }
        }
    }
    ScnnGrads {
        input: g,
        weight: gw,
        bias: gb,
    }
}

/// The four directional passes with their own shared kernels, applied in
/// [`Direction::ORDER`].
#[derive(Clone, Debug)]
pub struct ScnnBlock {
    pub channels: usize,
    pub kernel: usize,
    pub passes: [(Direction, ParamId, ParamId); 4],
}

impl ScnnBlock {
    pub const DEFAULT_KERNEL: usize = 9;

    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        channels: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(Error::config(format!("SCNN kernel extent must be odd, got {kernel}")));
        }
        let mut passes = Vec::with_capacity(4);
        for dir in Direction::ORDER {
            let w = store.add_uniform(
                format!("{prefix}.{}.weight", dir.name()),
                dir.weight_shape(channels, kernel),
                channels * kernel,
                rng,
            )?;
            let b = store.add_zeros(format!("{prefix}.{}.bias", dir.name()), Shape::new(1, channels, 1, 1))?;
            passes.push((dir, w, b));
        }
        Ok(ScnnBlock {
            channels,
            kernel,
            passes: passes.try_into().expect("four directions"),
        })
    }

    pub fn param_count(channels: usize, kernel: usize) -> usize {
        4 * (channels * channels * kernel + channels)
    }

    /// Multiply-accumulates of the slice convolutions actually executed on an `h × w` map.
    pub fn macs(channels: usize, kernel: usize, h: usize, w: usize) -> u64 {
        let per_row_pass = (h.saturating_sub(1) * w) as u64;
        let per_col_pass = (w.saturating_sub(1) * h) as u64;
        2 * (per_row_pass + per_col_pass) * (channels * channels * kernel) as u64
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let mut cur = x;
        for &(dir, w, b) in &self.passes {
            let wv = tape.param(store, w);
            let bv = tape.param(store, b);
            cur = tape.scnn_pass(cur, wv, bv, dir)?;
        }
        Ok(cur)
    }
}
