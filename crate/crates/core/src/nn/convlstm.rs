//! Convolutional LSTM cell with per-channel peephole connections.
//!
//! ```text
//! i  = σ(W_xi*x + W_hi*h + W_ci⊙c  + b_i)
//! f  = σ(W_xf*x + W_hf*h + W_cf⊙c  + b_f)
//! c' = f⊙c + i⊙tanh(W_xc*x + W_hc*h + b_c)
//! o  = σ(W_xo*x + W_ho*h + W_co⊙c' + b_o)
//! h' = o⊙tanh(c')
//! ```

use rand::Rng;

use super::conv::Conv2d;
use super::strnn::RnnState;
use crate::error::{Error, Result};
use crate::ops::ConvSpec;
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Shape};

#[derive(Clone, Debug)]
struct Gate {
    x: Conv2d,
    h: Conv2d,
}

#[derive(Clone, Debug)]
pub struct ConvLstmCell {
    pub input_ch: usize,
    pub hidden: usize,
    input_gate: Gate,
    forget_gate: Gate,
    cell_gate: Gate,
    output_gate: Gate,
    peep_i: ParamId,
    peep_f: ParamId,
    peep_o: ParamId,
}

fn gate<T: Scalar, R: Rng>(
    store: &mut ParamStore<T>,
    prefix: &str,
    tag: char,
    input_ch: usize,
    hidden: usize,
    rng: &mut R,
) -> Result<Gate> {
    let x = Conv2d::with_names(
        store,
        &format!("{prefix}.w_x{tag}"),
        &format!("{prefix}.b_{tag}"),
        ConvSpec::same(input_ch, hidden, 3),
        rng,
    )?;
    let h = Conv2d::with_names(
        store,
        &format!("{prefix}.w_h{tag}"),
        "",
        ConvSpec::same(hidden, hidden, 3).without_bias(),
        rng,
    )?;
    Ok(Gate { x, h })
}

impl ConvLstmCell {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input_ch: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let input_gate = gate(store, prefix, 'i', input_ch, hidden, rng)?;
        let forget_gate = gate(store, prefix, 'f', input_ch, hidden, rng)?;
        let cell_gate = gate(store, prefix, 'c', input_ch, hidden, rng)?;
        let output_gate = gate(store, prefix, 'o', input_ch, hidden, rng)?;
        let peep = Shape::new(1, hidden, 1, 1);
        let peep_i = store.add_uniform(format!("{prefix}.w_ci"), peep, 1, rng)?;
        let peep_f = store.add_uniform(format!("{prefix}.w_cf"), peep, 1, rng)?;
        let peep_o = store.add_uniform(format!("{prefix}.w_co"), peep, 1, rng)?;
        Ok(ConvLstmCell {
            input_ch,
            hidden,
            input_gate,
            forget_gate,
            cell_gate,
            output_gate,
            peep_i,
            peep_f,
            peep_o,
        })
    }

    pub fn param_count(input_ch: usize, hidden: usize) -> usize {
        4 * (input_ch * hidden * 9 + hidden) + 4 * hidden * hidden * 9 + 3 * hidden
    }

    pub fn macs_per_step(input_ch: usize, hidden: usize, h: usize, w: usize) -> u64 {
        4 * ((input_ch + hidden) * hidden * 9) as u64 * (h * w) as u64
    }

    fn pre_activation<T: Scalar>(
        &self,
        g: &Gate,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        h: Var,
    ) -> Result<Var> {
        let a = g.x.forward(tape, store, x)?;
        let b = g.h.forward(tape, store, h)?;
        tape.add(a, b)
    }

    pub fn step<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        state: &RnnState,
    ) -> Result<RnnState> {
        let xs = tape.shape(x);
        let hs = tape.shape(state.h);
        if xs.c != self.input_ch || xs.n != hs.n || xs.h != hs.h || xs.w != hs.w {
            return Err(Error::config(format!(
                "ConvLSTM step: input {xs} incompatible with state {hs} ({} input channels)",
                self.input_ch
            )));
        }
        let c = state
            .c
            .ok_or_else(|| Error::usage("ConvLSTM state is missing its cell tensor"))?;

        let zi = self.pre_activation(&self.input_gate, tape, store, x, state.h)?;
        let pi = tape.param(store, self.peep_i);
        let pc = tape.scale_channels(c, pi)?;
        let zi = tape.add(zi, pc)?;
        let i = tape.sigmoid(zi);

        let zf = self.pre_activation(&self.forget_gate, tape, store, x, state.h)?;
        let pf = tape.param(store, self.peep_f);
        let pc = tape.scale_channels(c, pf)?;
        let zf = tape.add(zf, pc)?;
        let f = tape.sigmoid(zf);

        let zc = self.pre_activation(&self.cell_gate, tape, store, x, state.h)?;
        let cand = tape.tanh(zc);
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, cand)?;
        let c_next = tape.add(keep, write)?;

        let zo = self.pre_activation(&self.output_gate, tape, store, x, state.h)?;
        let po = tape.param(store, self.peep_o);
        let pc = tape.scale_channels(c_next, po)?;
        let zo = tape.add(zo, pc)?;
        let o = tape.sigmoid(zo);

        let squashed = tape.tanh(c_next);
        let h_next = tape.mul(o, squashed)?;
        Ok(RnnState {
            h: h_next,
            c: Some(c_next),
        })
    }
}
