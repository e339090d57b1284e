use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Sigmoid => {
                // split on sign so exp never overflows
                if x >= T::zero() {
                    T::one() / (T::one() + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (T::one() + e)
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    #[inline]
    pub fn derivative<T: Scalar>(self, x: T, y: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Tanh => T::one() - y * y,
        }
    }
}

pub fn activate<T: Scalar>(x: &Tensor<T>, act: Activation) -> Tensor<T> {
    x.map(|v| act.apply(v))
}

pub fn activate_backward<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>, act: Activation, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .zip(y.data())
        .zip(grad_out.data())
        .map(|((&xv, &yv), &g)| g * act.derivative(xv, yv))
        .collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

/// Per-pixel log-softmax over the channel axis, stabilised by max subtraction.
pub fn log_softmax_channels<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    if s.c < 2 {
        return Err(Error::config(format!("log-softmax needs >= 2 channels, got {}", s.c)));
    }
    let plane = s.plane();
    let mut out = Tensor::zeros(s);
    for n in 0..s.n {
        let src = x.sample(n);
        let dst = out.sample_mut(n);
        for p in 0..plane {
            let mut m = T::neg_infinity();
            for c in 0..s.c {
                m = m.max(src[c * plane + p]);
            }
            let mut acc = T::zero();
            for c in 0..s.c {
                acc = acc + (src[c * plane + p] - m).exp();
            }
            let lse = m + acc.ln();
            for c in 0..s.c {
                dst[c * plane + p] = src[c * plane + p] - lse;
            }
        }
    }
    Ok(out)
}

/// `dx = dy - softmax · Σ_c dy`, using the saved log-probabilities `y`.
pub fn log_softmax_backward<T: Scalar>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let s = y.shape();
    let plane = s.plane();
    let mut g = Tensor::zeros(s);
    for n in 0..s.n {
        let ys = y.sample(n);
        let gs = grad_out.sample(n);
        let dst = g.sample_mut(n);
        for p in 0..plane {
            let mut total = T::zero();
            for c in 0..s.c {
                total = total + gs[c * plane + p];
            }
            for c in 0..s.c {
                let i = c * plane + p;
                dst[i] = gs[i] - ys[i].exp() * total;
            }
        }
    }
    g
}

/// Channel concatenation, `a`'s channels first.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.n != sb.n || sa.h != sb.h || sa.w != sb.w {
        return Err(Error::config(format!("concat needs matching n,h,w: {sa} vs {sb}")));
    }
    let os = sa.with_c(sa.c + sb.c);
    let mut data = Vec::with_capacity(os.numel());
    for n in 0..sa.n {
        data.extend_from_slice(a.sample(n));
        data.extend_from_slice(b.sample(n));
    }
    Ok(Tensor::from_vec(os, data).expect("concat length"))
}

pub fn concat_backward<T: Scalar>(sa: Shape, sb: Shape, grad_out: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let mut ga = Vec::with_capacity(sa.numel());
    let mut gb = Vec::with_capacity(sb.numel());
    for n in 0..sa.n {
        let g = grad_out.sample(n);
        ga.extend_from_slice(&g[..sa.sample()]);
        gb.extend_from_slice(&g[sa.sample()..]);
    }
    (
        Tensor::from_vec(sa, ga).expect("concat split"),
        Tensor::from_vec(sb, gb).expect("concat split"),
    )
}

/// Multiplies every channel plane of `x` by the matching entry of `scale` (`1×C×1×1`).
pub fn scale_channels<T: Scalar>(x: &Tensor<T>, scale: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    if scale.numel() != s.c {
        return Err(Error::config(format!(
            "channel scale has {} entries for {} channels",
            scale.numel(),
            s.c
        )));
    }
    let plane = s.plane();
    let k = scale.data();
    let mut out = x.clone();
    for (i, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
        let f = k[i % s.c];
        chunk.iter_mut().for_each(|v| *v = *v * f);
    }
    Ok(out)
}

pub fn scale_channels_backward<T: Scalar>(
    x: &Tensor<T>,
    scale: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let s = x.shape();
    let plane = s.plane();
    let k = scale.data();
    let mut gx = grad_out.clone();
    let mut gk = Tensor::zeros(scale.shape());
    for (i, chunk) in gx.data_mut().chunks_mut(plane).enumerate() {
        let c = i % s.c;
        let xs = &x.data()[i * plane..(i + 1) * plane];
        let mut acc = T::zero();
        for (g, &xv) in chunk.iter_mut().zip(xs) {
            acc = acc + *g * xv;
            *g = *g * k[c];
        }
        gk.data_mut()[c] = gk.data()[c] + acc;
    }
    (gx, gk)
}
