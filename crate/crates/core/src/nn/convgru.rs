//! Convolutional GRU cell.
//!
//! ```text
//! z  = σ(W_zx*x + W_zh*h + b_z)
//! r  = σ(W_rx*x + W_rh*h + b_r)
//! h̃  = tanh(W_ox*x + W_oh*(r⊙h) + b_o)
//! h' = z⊙h̃ + (1 - z)⊙h
//! ```
//!
//! In training mode inverted dropout is applied to the cell input `x`.

use rand::Rng;

use super::conv::Conv2d;
use super::strnn::RnnState;
use crate::error::{Error, Result};
use crate::ops::ConvSpec;
use crate::params::ParamStore;
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug)]
pub struct ConvGruCell {
    pub input_ch: usize,
    pub hidden: usize,
    pub dropout: f64,
    update_x: Conv2d,
    update_h: Conv2d,
    reset_x: Conv2d,
    reset_h: Conv2d,
    cand_x: Conv2d,
    cand_h: Conv2d,
}

impl ConvGruCell {
    pub const DEFAULT_DROPOUT: f64 = 0.5;

    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input_ch: usize,
        hidden: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::config(format!("dropout must be in [0, 1), got {dropout}")));
        }
        let xs = ConvSpec::same(input_ch, hidden, 3);
        let hs = ConvSpec::same(hidden, hidden, 3).without_bias();
        let mut pair = |tag: &str, rng: &mut R| -> Result<(Conv2d, Conv2d)> {
            let x = Conv2d::with_names(store, &format!("{prefix}.w_{tag}x"), &format!("{prefix}.b_{tag}"), xs, rng)?;
            let h = Conv2d::with_names(store, &format!("{prefix}.w_{tag}h"), "", hs, rng)?;
            Ok((x, h))
        };
        let (update_x, update_h) = pair("z", rng)?;
        let (reset_x, reset_h) = pair("r", rng)?;
        let (cand_x, cand_h) = pair("o", rng)?;
        Ok(ConvGruCell {
            input_ch,
            hidden,
            dropout,
            update_x,
            update_h,
            reset_x,
            reset_h,
            cand_x,
            cand_h,
        })
    }

    pub fn param_count(input_ch: usize, hidden: usize) -> usize {
        3 * (input_ch * hidden * 9 + hidden) + 3 * hidden * hidden * 9
    }

    pub fn macs_per_step(input_ch: usize, hidden: usize, h: usize, w: usize) -> u64 {
        3 * ((input_ch + hidden) * hidden * 9) as u64 * (h * w) as u64
    }

    /// `dropout_rng` switches training mode on: when present, the input is masked.
    pub fn step<T: Scalar, R: Rng>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        state: &RnnState,
        dropout_rng: Option<&mut R>,
    ) -> Result<RnnState> {
        let xs = tape.shape(x);
        let hs = tape.shape(state.h);
        if xs.c != self.input_ch || xs.n != hs.n || xs.h != hs.h || xs.w != hs.w {
            return Err(Error::config(format!(
                "ConvGRU step: input {xs} incompatible with state {hs} ({} input channels)",
                self.input_ch
            )));
        }
        let x = match dropout_rng {
            Some(rng) if self.dropout > 0.0 => {
                let keep = 1.0 - self.dropout;
                let scale = T::from_f64_lossy(1.0 / keep);
                let mask = Tensor::from_vec(
                    xs,
                    (0..xs.numel())
                        .map(|_| if rng.random_bool(keep) { scale } else { T::zero() })
                        .collect(),
                )?;
                tape.mul_const(x, mask)?
            }
            _ => x,
        };
        let h = state.h;

        let a = self.update_x.forward(tape, store, x)?;
        let b = self.update_h.forward(tape, store, h)?;
        let z = tape.add(a, b)?;
        let z = tape.sigmoid(z);

        let a = self.reset_x.forward(tape, store, x)?;
        let b = self.reset_h.forward(tape, store, h)?;
        let r = tape.add(a, b)?;
        let r = tape.sigmoid(r);

        let rh = tape.mul(r, h)?;
        let a = self.cand_x.forward(tape, store, x)?;
        let b = self.cand_h.forward(tape, store, rh)?;
        let cand = tape.add(a, b)?;
        let cand = tape.tanh(cand);

        let take = tape.mul(z, cand)?;
        let keep = tape.one_minus(z);
        let keep = tape.mul(keep, h)?;
        let h_next = tape.add(take, keep)?;
        Ok(RnnState { h: h_next, c: None })
    }
}
